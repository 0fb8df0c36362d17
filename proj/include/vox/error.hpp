#pragma once

#include <stdexcept>
#include <string>

namespace vox {

// Every recoverable failure carries a stable category name. The CLI prints
// it as a single machine-parseable line and maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

#define VOX_ERROR(Name)                                               \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}      \
  };

// audio-dsp
VOX_ERROR(NotWav)
VOX_ERROR(UnsupportedFormat)
VOX_ERROR(Truncated)
VOX_ERROR(IoFailure)
VOX_ERROR(TooShort)
VOX_ERROR(SampleRateMismatch)
VOX_ERROR(IndexOutOfRange)
VOX_ERROR(FactorOutOfRange)

// numgrad
VOX_ERROR(ShapeMismatch)
VOX_ERROR(NonFiniteValue)
VOX_ERROR(CheckpointIncompatible)

// models
VOX_ERROR(EmptyInput)
VOX_ERROR(TargetOutOfRange)
VOX_ERROR(EmptyList)
VOX_ERROR(InsufficientSpeakers)
VOX_ERROR(EmptyTokens)
VOX_ERROR(EmptyMemory)

// augmentation
VOX_ERROR(SilentSignal)
VOX_ERROR(SilentNoise)
VOX_ERROR(EmptyRir)

// evaluation
VOX_ERROR(OneClassOnly)
VOX_ERROR(EmptyTrials)
VOX_ERROR(MissingWeight)
VOX_ERROR(ZeroWeightSum)

// pipeline
VOX_ERROR(ParseError)
VOX_ERROR(DuplicateUttId)
VOX_ERROR(MissingFile)
VOX_ERROR(ManifestInvalid)
VOX_ERROR(EmptyText)
VOX_ERROR(ConfigInvalid)

#undef VOX_ERROR

}  // namespace vox
