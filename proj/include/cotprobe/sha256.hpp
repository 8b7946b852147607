#pragma once

#include <openssl/evp.h>

#include <memory>
#include <string>
#include <string_view>

#include "cotprobe/errors.hpp"

namespace cotprobe {

namespace detail {
struct EvpCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
}  // namespace detail

// Incremental SHA-256; content hashes key the gateway cache and seal the
// record-file integrity footers.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw IntegrityError("sha256 init failed");
  }

  void update(std::string_view data) {
    if (EVP_DigestUpdate(ctx_.get(), data.data(), data.size()) != 1)
      throw IntegrityError("sha256 update failed");
  }

  std::string hex() const {
    // Finalize a copy so the accumulator can keep streaming.
    std::unique_ptr<EVP_MD_CTX, detail::EvpCtxDeleter> copy(EVP_MD_CTX_new());
    if (!copy || EVP_MD_CTX_copy_ex(copy.get(), ctx_.get()) != 1)
      throw IntegrityError("sha256 copy failed");
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(copy.get(), digest, &len) != 1)
      throw IntegrityError("sha256 final failed");
    static const char* kHex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[digest[i] >> 4]);
      out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, detail::EvpCtxDeleter> ctx_;
};

inline std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data);
  return h.hex();
}

}  // namespace cotprobe
