#pragma once
// Error taxonomy. Every failure mode callers are expected to handle has a
// named class here; the CLI renders them as "error: <ClassName>: detail".

#include <stdexcept>
#include <string>

namespace xda {

class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& detail)
        : std::runtime_error(detail), name_(std::move(name)) {}
    const std::string& name() const { return name_; }
    std::string line() const { return "error: " + name_ + ": " + what(); }

private:
    std::string name_;
};

#define XDA_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                            \
    public:                                                                 \
        explicit Name(const std::string& detail) : Error(#Name, detail) {} \
    }

// corpus / binary loading
XDA_DEFINE_ERROR(MalformedHeader);
XDA_DEFINE_ERROR(EmptySplit);
XDA_DEFINE_ERROR(InvalidSynthConfig);

// tokenizer
XDA_DEFINE_ERROR(SequenceTooLong);
XDA_DEFINE_ERROR(EmptyInput);
XDA_DEFINE_ERROR(UnknownId);
XDA_DEFINE_ERROR(PositionOverflow);

// masking
XDA_DEFINE_ERROR(EmptyMaskSet);

// model / autodiff
XDA_DEFINE_ERROR(NonFiniteActivation);
XDA_DEFINE_ERROR(GraphNotRecorded);
XDA_DEFINE_ERROR(ShapeMismatch);

// losses / eval
XDA_DEFINE_ERROR(AllIgnored);
XDA_DEFINE_ERROR(ZeroProbability);
XDA_DEFINE_ERROR(DegenerateGold);

// labels
XDA_DEFINE_ERROR(LabelMisalignment);
XDA_DEFINE_ERROR(OverlappingFunctions);
XDA_DEFINE_ERROR(LengthMismatch);

// config / io
XDA_DEFINE_ERROR(BadConfig);
XDA_DEFINE_ERROR(IoFailure);

#undef XDA_DEFINE_ERROR

} // namespace xda
