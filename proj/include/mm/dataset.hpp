#pragma once

#include "mm/datagen.hpp"
#include "mm/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace mm {

// Read-only view of a generated dataset tree, grouped into temporally ordered
// sequences of samples. Small datasets are cached in memory after first load.
class VideoDataset {
public:
    struct Sequence {
        std::string split, seq_id;
        std::vector<size_t> rows;  // manifest row indices in temporal order
    };

    static VideoDataset open(const std::string& root);

    const std::string& root() const { return root_; }
    const DatasetManifest& manifest() const { return manifest_; }
    const std::vector<Sequence>& sequences() const { return sequences_; }
    // Sequences of one split; falls back to every sequence when none match.
    std::vector<const Sequence*> sequences_matching(const std::string& split) const;
    bool has_kind(const char* kind) const;

    size_t size() const { return manifest_.rows.size(); }
    Tensor load(size_t row, const char* kind) const;

private:
    std::string root_;
    DatasetManifest manifest_;
    std::vector<Sequence> sequences_;
    mutable std::map<std::string, Tensor> cache_;
    bool cache_enabled_ = false;
};

}  // namespace mm
