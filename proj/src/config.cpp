#include "mm/config.hpp"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace mm {

using nlohmann::json;

json RunConfig::defaults() {
    return json{
        {"seed", 0},
        {"out", "out"},
        {"datagen",
         {{"raw_root", ""},
          {"out_root", ""},
          {"split", "train"},
          {"window_range", {7, 13}},
          {"stride", 0},
          {"crf", "gamma:2.2"},
          {"K", 15.0},
          {"flow_method", "builtin"},
          {"external_flow_dir", ""},
          {"flow", {{"pyramid_levels", 3}, {"iterations", 100}, {"smoothness", 0.02}}},
          {"write_center_magnitude", true}}},
        {"mmpnet", {{"base_channels", 16}, {"levels", 4}, {"rdb_layers", 3}, {"rdb_growth", 16}}},
        {"net", {{"n_a", 9}, {"n_b", 10}, {"n_c", 18}, {"F", 8}}},
        {"loss",
         {{"lambda1", 0.5}, {"lambda2", 1.0}, {"epsilon", 0.001},
          {"gradient_op", "forward_diff"}}},
        {"train_mmp",
         {{"dataset", ""},
          {"test_dataset", ""},
          {"epochs", 400},
          {"batch_size", 8},
          {"patch_size", 512},
          {"base_lr", 0.0003},
          {"schedule", "step"},
          {"trim_fraction", 0.5},
          {"augment", false},
          {"checkpoint_interval", 1},
          {"val_interval", 10},
          {"resume", ""}}},
        {"train_deblur",
         {{"dataset", ""},
          {"val_dataset", ""},
          {"epochs", 1000},
          {"batch_size", 8},
          {"patch_size", 256},
          {"seq_len_train", 10},
          {"base_lr", 0.0005},
          {"schedule", "cosine"},
          {"augment", true},
          {"checkpoint_interval", 1},
          {"val_interval", 100},
          {"mmp_checkpoint", ""},
          {"prior_source", "mmpnet"},
          {"use_mmam", true},
          {"use_ndf", true},
          {"resume", ""}}},
        {"eval",
         {{"dataset", ""},
          {"checkpoint", ""},
          {"mmp_checkpoint", ""},
          {"split", "test"},
          {"runtime_frames", 20},
          {"warmup_frames", 5}}},
        {"infer", {{"frames", ""}, {"checkpoint", ""}, {"mmp_checkpoint", ""}}},
        {"ablate", {{"epochs", 1}}},
        {"plot", {{"report_tsv", ""}, {"metrics_log", ""}}}};
}

namespace {

std::vector<std::string> split_path(const std::string& key) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : key) {
        if (c == '.') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

json* walk(json& root, const std::vector<std::string>& parts, bool must_exist) {
    json* node = &root;
    for (const auto& p : parts) {
        if (!node->is_object() || !node->contains(p)) {
            if (must_exist) return nullptr;
            (*node)[p] = json::object();
        }
        node = &(*node)[p];
    }
    return node;
}

void merge_checked(json& base, const json& patch, const std::string& where) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (!base.contains(it.key()))
            throw UsageError("unknown config key '" + where + it.key() + "'");
        if (it->is_object() && base[it.key()].is_object())
            merge_checked(base[it.key()], *it, where + it.key() + ".");
        else
            base[it.key()] = *it;
    }
}

json parse_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);  // plain string value
    return v;
}

}  // namespace

RunConfig RunConfig::resolve(const std::string& config_path,
                             const std::vector<std::string>& set_overrides,
                             const std::string& section, const std::string& out_dir,
                             std::optional<uint64_t> seed) {
    RunConfig cfg;
    cfg.j_ = defaults();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in.good()) throw UsageError("cannot open config file: " + config_path);
        json file = json::parse(in, nullptr, false);
        if (file.is_discarded()) throw UsageError("config file is not valid JSON: " + config_path);
        merge_checked(cfg.j_, file, "");
    }
    for (const auto& kv : set_overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq);
        json value = parse_value(kv.substr(eq + 1));
        json* node = walk(cfg.j_, split_path(key), true);
        if (!node && !section.empty()) {
            std::vector<std::string> parts = split_path(section + "." + key);
            node = walk(cfg.j_, parts, true);
        }
        if (!node) throw UsageError("unknown config key '" + key + "'");
        *node = value;
    }
    if (seed) cfg.j_["seed"] = *seed;
    if (!out_dir.empty()) cfg.j_["out"] = out_dir;
    return cfg;
}

DatagenConfig RunConfig::datagen() const {
    const json& d = j_.at("datagen");
    DatagenConfig c;
    c.raw_root = d.at("raw_root").get<std::string>();
    c.out_root = d.at("out_root").get<std::string>();
    if (c.out_root.empty()) c.out_root = out_dir() + "/dataset";
    c.split = d.at("split").get<std::string>();
    auto range = d.at("window_range");
    if (!range.is_array() || range.size() != 2)
        throw UsageError("datagen.window_range must be [min,max]");
    c.window_min = range[0].get<int>();
    c.window_max = range[1].get<int>();
    c.stride = d.at("stride").get<int>();
    c.crf = parse_crf(d.at("crf").get<std::string>());
    c.K = d.at("K").get<Real>();
    c.seed = seed();
    c.flow_method = d.at("flow_method").get<std::string>();
    c.external_flow_dir = d.at("external_flow_dir").get<std::string>();
    c.flow.pyramid_levels = d.at("flow").at("pyramid_levels").get<int>();
    c.flow.iterations = d.at("flow").at("iterations").get<int>();
    c.flow.smoothness = d.at("flow").at("smoothness").get<Real>();
    c.write_center_magnitude = d.at("write_center_magnitude").get<bool>();
    return c;
}

MMPNetConfig RunConfig::mmpnet() const {
    const json& d = j_.at("mmpnet");
    MMPNetConfig c;
    c.base_channels = d.at("base_channels").get<int>();
    c.levels = d.at("levels").get<int>();
    c.rdb_layers = d.at("rdb_layers").get<int>();
    c.rdb_growth = d.at("rdb_growth").get<int>();
    return c;
}

NetConfig RunConfig::net() const {
    const json& d = j_.at("net");
    NetConfig c;
    c.n_a = d.at("n_a").get<int>();
    c.n_b = d.at("n_b").get<int>();
    c.n_c = d.at("n_c").get<int>();
    c.F = d.at("F").get<int>();
    return c;
}

LossWeights RunConfig::loss() const {
    const json& d = j_.at("loss");
    LossWeights w;
    w.lambda1 = d.at("lambda1").get<Real>();
    w.lambda2 = d.at("lambda2").get<Real>();
    w.epsilon = d.at("epsilon").get<Real>();
    w.gradient_op = d.at("gradient_op").get<std::string>();
    return w;
}

TrainConfig RunConfig::train_mmp() const {
    const json& d = j_.at("train_mmp");
    TrainConfig c;
    c.epochs = d.at("epochs").get<int>();
    c.batch_size = d.at("batch_size").get<int>();
    c.patch_size = d.at("patch_size").get<int>();
    c.base_lr = d.at("base_lr").get<Real>();
    c.schedule = d.at("schedule").get<std::string>();
    c.seed = seed();
    c.augment = d.at("augment").get<bool>();
    c.dataset_root = d.at("dataset").get<std::string>();
    c.aux_dataset_root = d.at("test_dataset").get<std::string>();
    c.out_dir = out_dir() + "/mmpnet";
    c.trim_fraction = d.at("trim_fraction").get<Real>();
    c.checkpoint_interval = std::max(1, d.at("checkpoint_interval").get<int>());
    c.val_interval = d.at("val_interval").get<int>();
    c.resume_from = d.at("resume").get<std::string>();
    c.mmpnet = mmpnet();
    return c;
}

TrainConfig RunConfig::train_deblur() const {
    const json& d = j_.at("train_deblur");
    TrainConfig c;
    c.epochs = d.at("epochs").get<int>();
    c.batch_size = d.at("batch_size").get<int>();
    c.patch_size = d.at("patch_size").get<int>();
    c.seq_len_train = d.at("seq_len_train").get<int>();
    c.base_lr = d.at("base_lr").get<Real>();
    c.schedule = d.at("schedule").get<std::string>();
    c.seed = seed();
    c.augment = d.at("augment").get<bool>();
    c.dataset_root = d.at("dataset").get<std::string>();
    c.aux_dataset_root = d.at("val_dataset").get<std::string>();
    c.out_dir = out_dir() + "/deblur";
    c.loss = loss();
    c.checkpoint_interval = std::max(1, d.at("checkpoint_interval").get<int>());
    c.val_interval = d.at("val_interval").get<int>();
    c.resume_from = d.at("resume").get<std::string>();
    c.net = net();
    c.mmpnet = mmpnet();
    c.mmp_checkpoint = d.at("mmp_checkpoint").get<std::string>();
    c.prior_source = d.at("prior_source").get<std::string>();
    c.use_mmam = d.at("use_mmam").get<bool>();
    c.use_ndf = d.at("use_ndf").get<bool>();
    return c;
}

void RunConfig::echo() const {
    fs::create_directories(out_dir());
    std::ofstream out(out_dir() + "/config_resolved.json");
    check(out.good(), "cannot write config echo under " + out_dir());
    out << j_.dump(2) << '\n';
}

}  // namespace mm
