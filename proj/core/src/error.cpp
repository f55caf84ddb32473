#include "wallkin/error.hpp"

namespace wallkin {

void throw_validation(const std::string& what) { throw ValidationError(what); }
void throw_io(const std::string& what) { throw IoError(what); }
void throw_numeric(const std::string& what) { throw NumericError(what); }

}  // namespace wallkin
