#include "mm/dataset.hpp"

#include "mm/image.hpp"

#include <filesystem>

namespace fs = std::filesystem;

namespace mm {

VideoDataset VideoDataset::open(const std::string& root) {
    VideoDataset ds;
    ds.root_ = root;
    ds.manifest_ = load_manifest(root);
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < ds.manifest_.rows.size(); ++i) {
        const auto& r = ds.manifest_.rows[i];
        std::string key = r.split + "/" + r.seq_id;
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, ds.sequences_.size());
            ds.sequences_.push_back({r.split, r.seq_id, {i}});
        } else {
            ds.sequences_[it->second].rows.push_back(i);
        }
    }
    ds.cache_enabled_ = ds.manifest_.rows.size() <= 256;
    return ds;
}

std::vector<const VideoDataset::Sequence*> VideoDataset::sequences_matching(
    const std::string& split) const {
    std::vector<const Sequence*> out;
    for (const auto& s : sequences_)
        if (split.empty() || s.split == split) out.push_back(&s);
    if (out.empty())
        for (const auto& s : sequences_) out.push_back(&s);
    return out;
}

bool VideoDataset::has_kind(const char* kind) const {
    if (manifest_.rows.empty()) return false;
    return fs::exists(sample_path(root_, manifest_.rows[0], kind));
}

Tensor VideoDataset::load(size_t row, const char* kind) const {
    check(row < manifest_.rows.size(), "dataset: row out of range");
    std::string path = sample_path(root_, manifest_.rows[row], kind);
    if (cache_enabled_) {
        auto it = cache_.find(path);
        if (it != cache_.end()) return it->second;
    }
    Tensor t = load_png(path);
    if (cache_enabled_) cache_.emplace(path, t);
    return t;
}

}  // namespace mm
