#pragma once

#include <stdexcept>
#include <string>

namespace bic {

// Base for every error the library throws. Per-item failures that the
// pipeline tolerates are carried as status fields instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BIC_DEFINE_ERROR(Name)                                                 \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}   \
    }

BIC_DEFINE_ERROR(InvalidArgument);
BIC_DEFINE_ERROR(CoincidentPoints);
BIC_DEFINE_ERROR(DegeneratePolygon);
BIC_DEFINE_ERROR(InvalidPolygon);
BIC_DEFINE_ERROR(MalformedXml);
BIC_DEFINE_ERROR(TransportError);
BIC_DEFINE_ERROR(BackendUnavailable);
BIC_DEFINE_ERROR(InvalidDistribution);
BIC_DEFINE_ERROR(AlignmentError);
BIC_DEFINE_ERROR(EmptyEvidence);
BIC_DEFINE_ERROR(InsufficientPopulation);
BIC_DEFINE_ERROR(EmptyBbox);
BIC_DEFINE_ERROR(IoError);
BIC_DEFINE_ERROR(UpstreamIncomplete);
BIC_DEFINE_ERROR(StageFailed);
BIC_DEFINE_ERROR(RunLocked);

#undef BIC_DEFINE_ERROR

}  // namespace bic
