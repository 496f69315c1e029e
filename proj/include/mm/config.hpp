#pragma once

#include "mm/datagen.hpp"
#include "mm/trainer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mm {

// Raised for malformed invocations (unknown keys, bad values); the CLI maps it
// to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Layered run configuration: defaults, then a JSON config file, then --set
// overrides. Key names are fixed; unknown keys are usage errors.
class RunConfig {
public:
    static nlohmann::json defaults();

    // section: the subcommand's home section; bare --set keys resolve there
    // first, dotted keys resolve from the root.
    static RunConfig resolve(const std::string& config_path,
                             const std::vector<std::string>& set_overrides,
                             const std::string& section, const std::string& out_dir,
                             std::optional<uint64_t> seed);

    const nlohmann::json& tree() const { return j_; }
    uint64_t seed() const { return j_.at("seed").get<uint64_t>(); }
    std::string out_dir() const { return j_.at("out").get<std::string>(); }

    DatagenConfig datagen() const;
    MMPNetConfig mmpnet() const;
    NetConfig net() const;
    LossWeights loss() const;
    TrainConfig train_mmp() const;
    TrainConfig train_deblur() const;

    // Writes <out>/config_resolved.json; every subcommand calls this first.
    void echo() const;

private:
    nlohmann::json j_;
};

}  // namespace mm
