#include "mm/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mm {

using nlohmann::json;

Checkpoint Checkpoint::from_params(const std::string& kind, const json& meta,
                                   const ParamMap& params, const Adam* adam) {
    Checkpoint ckpt;
    ckpt.kind = kind;
    ckpt.meta = meta;
    for (const auto& [name, t] : params.items) ckpt.tensors.emplace_back(name, t.detach());
    if (adam) {
        ckpt.has_adam = true;
        ckpt.adam_step = adam->step_count();
        ckpt.adam_state = const_cast<Adam*>(adam)->state();
    }
    return ckpt;
}

void Checkpoint::restore_params(ParamMap& params) const {
    check(tensors.size() == params.items.size(), "checkpoint: parameter count mismatch");
    for (size_t i = 0; i < tensors.size(); ++i) {
        auto& [name, stored] = tensors[i];
        auto& [pname, target] = params.items[i];
        check(name == pname && stored.shape() == target.shape(),
              "checkpoint: parameter '" + name + "' does not match the model");
        target.vec() = stored.vec();
    }
}

void Checkpoint::restore_adam(Adam& adam) const {
    check(has_adam, "checkpoint: no optimizer state stored");
    adam.state() = adam_state;
    adam.set_step_count(adam_step);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["kind"] = ckpt.kind;
    header["meta"] = ckpt.meta;
    json dir = json::array();
    for (const auto& [name, t] : ckpt.tensors) dir.push_back({{"name", name}, {"shape", t.shape()}});
    header["tensors"] = dir;
    header["adam"] = ckpt.has_adam;
    header["adam_step"] = ckpt.adam_step;
    std::string hs = header.dump();

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        check(out.good(), "checkpoint: cannot write " + tmp);
        uint32_t version = 1;
        uint64_t hlen = hs.size();
        out.write("MMCK", 4);
        out.write(reinterpret_cast<const char*>(&version), 4);
        out.write(reinterpret_cast<const char*>(&hlen), 8);
        out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& [name, t] : ckpt.tensors)
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * sizeof(Real)));
        if (ckpt.has_adam) {
            for (const auto& s : ckpt.adam_state) {
                out.write(reinterpret_cast<const char*>(s.m.data()),
                          static_cast<std::streamsize>(s.m.size() * sizeof(Real)));
                out.write(reinterpret_cast<const char*>(s.v.data()),
                          static_cast<std::streamsize>(s.v.size() * sizeof(Real)));
            }
        }
        check(out.good(), "checkpoint: short write on " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw std::runtime_error("missing checkpoint: " + path);
    char magic[4];
    uint32_t version = 0;
    uint64_t hlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    check(in.good() && std::string(magic, 4) == "MMCK" && version == 1,
          "checkpoint: bad header in " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.meta = header.at("meta");
    for (const auto& e : header.at("tensors")) {
        std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(Real)));
        ckpt.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    ckpt.has_adam = header.at("adam").get<bool>();
    ckpt.adam_step = header.at("adam_step").get<int64_t>();
    if (ckpt.has_adam) {
        for (const auto& [name, t] : ckpt.tensors) {
            Adam::State s;
            s.m.resize(static_cast<size_t>(t.numel()));
            s.v.resize(static_cast<size_t>(t.numel()));
            in.read(reinterpret_cast<char*>(s.m.data()),
                    static_cast<std::streamsize>(s.m.size() * sizeof(Real)));
            in.read(reinterpret_cast<char*>(s.v.data()),
                    static_cast<std::streamsize>(s.v.size() * sizeof(Real)));
            ckpt.adam_state.push_back(std::move(s));
        }
    }
    check(in.good(), "checkpoint: truncated file " + path);
    return ckpt;
}

}  // namespace mm
