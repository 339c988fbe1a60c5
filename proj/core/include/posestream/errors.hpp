#pragma once

#include <stdexcept>
#include <string>

namespace posestream {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define POSESTREAM_DEFINE_ERROR(Name)          \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  }

POSESTREAM_DEFINE_ERROR(InvalidArgument);
POSESTREAM_DEFINE_ERROR(NonPositiveDepth);
POSESTREAM_DEFINE_ERROR(NoValidLimb);
POSESTREAM_DEFINE_ERROR(NoValidKeypoints);
POSESTREAM_DEFINE_ERROR(EmptyTrackSet);
POSESTREAM_DEFINE_ERROR(OutOfOrderFrame);
POSESTREAM_DEFINE_ERROR(DegeneratePolygon);
POSESTREAM_DEFINE_ERROR(DegenerateCloud);
POSESTREAM_DEFINE_ERROR(ConfigError);
POSESTREAM_DEFINE_ERROR(UnknownScenario);
POSESTREAM_DEFINE_ERROR(DataError);

#undef POSESTREAM_DEFINE_ERROR

}  // namespace posestream
