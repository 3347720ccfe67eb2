#ifndef GCS_VERSION_HPP
#define GCS_VERSION_HPP

namespace gcs {

inline constexpr const char* version = "0.1.0";

} // namespace gcs

#endif
