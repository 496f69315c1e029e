#pragma once

#include "mm/nn.hpp"
#include "mm/tensor.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mm {

// Self-describing training state container. Layout: magic "MMCK", u32 version,
// u64 header length, JSON header (kind, config echo, epoch, tensor directory,
// optimizer directory), then raw little-endian float64 payload in directory
// order. Writes go to a temporary file first and are renamed into place.
struct Checkpoint {
    std::string kind;  // "mmpnet" or "mmprnn"
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;
    bool has_adam = false;
    int64_t adam_step = 0;
    std::vector<Adam::State> adam_state;

    static Checkpoint from_params(const std::string& kind, const nlohmann::json& meta,
                                  const ParamMap& params, const Adam* adam = nullptr);
    // Copies stored values into matching parameters; throws on any mismatch.
    void restore_params(ParamMap& params) const;
    void restore_adam(Adam& adam) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mm
