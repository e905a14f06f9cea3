#include "cio/common.hpp"

namespace cio {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::exists: return "exists";
    case ErrorCode::store_full: return "store-full";
    case ErrorCode::not_an_archive: return "not-an-archive";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::finalized: return "finalized";
    case ErrorCode::io: return "io";
    case ErrorCode::unplaceable: return "unplaceable";
    case ErrorCode::config: return "config";
    case ErrorCode::runtime: return "runtime";
  }
  return "unknown";
}

}  // namespace cio
