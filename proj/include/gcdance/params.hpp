#pragma once

#include <nlohmann/json.hpp>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/io.hpp"
#include "gcdance/tensor.hpp"

namespace gcdance {

// Named trainable arrays with a stable flattened ordering (insertion order,
// which is deterministic given the same model configuration). Flatten and
// unflatten form an exact round trip; the multi-task aggregators consume
// gradients in this layout.
class ParameterStore {
public:
    Tensor& create(const std::string& name, Tensor init) {
        require(!index_.count(name), errc::data, "parameter exists: " + name);
        index_[name] = items_.size();
        items_.push_back({name, std::move(init)});
        total_ += items_.back().value.size();
        return items_.back().value;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), errc::data, "unknown parameter: " + name);
        return items_[it->second].value;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), errc::data, "unknown parameter: " + name);
        return items_[it->second].value;
    }

    std::size_t count() const { return items_.size(); }
    std::int64_t total_size() const { return total_; }

    const std::string& name(std::size_t i) const { return items_[i].name; }
    Tensor& value(std::size_t i) { return items_[i].value; }
    const Tensor& value(std::size_t i) const { return items_[i].value; }

    std::vector<double> flatten() const {
        std::vector<double> flat(static_cast<std::size_t>(total_));
        std::size_t off = 0;
        for (const auto& it : items_) {
            std::copy(it.value.data(), it.value.data() + it.value.size(), flat.begin() + off);
            off += static_cast<std::size_t>(it.value.size());
        }
        return flat;
    }

    void unflatten(const std::vector<double>& flat) {
        require(static_cast<std::int64_t>(flat.size()) == total_, errc::data,
                "unflatten: size mismatch");
        std::size_t off = 0;
        for (auto& it : items_) {
            std::copy(flat.begin() + off, flat.begin() + off + static_cast<std::size_t>(it.value.size()),
                      it.value.data());
            off += static_cast<std::size_t>(it.value.size());
        }
    }

    // Checkpoint layout: <dir>/manifest.json describing name/shape/byte-offset
    // per tensor plus <dir>/weights.bin, a raw little-endian float32 blob.
    // Round trips are bit-exact at 32-bit precision.
    void save(const fs::path& dir, const nlohmann::json& extra = nlohmann::json::object()) const {
        fs::create_directories(dir);
        ByteWriter blob;
        nlohmann::json manifest;
        manifest["version"] = 1;
        manifest["tensors"] = nlohmann::json::array();
        std::uint64_t offset = 0;
        for (const auto& it : items_) {
            nlohmann::json t;
            t["name"] = it.name;
            t["shape"] = it.value.dims();
            t["byte_offset"] = offset;
            manifest["tensors"].push_back(t);
            blob.f32_array(it.value.data(), static_cast<std::size_t>(it.value.size()));
            offset += static_cast<std::uint64_t>(it.value.size()) * 4;
        }
        manifest["extra"] = extra;
        atomic_write(dir / "weights.bin", blob.str());
        atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
    }

    // Loads values into an already-constructed store; names and shapes must
    // match the manifest exactly. Returns the manifest's "extra" payload.
    nlohmann::json load(const fs::path& dir) {
        nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
        require(manifest.value("version", 0) == 1, errc::data,
                "checkpoint: unsupported manifest version");
        std::string blob = read_file(dir / "weights.bin");
        ByteReader reader(blob, (dir / "weights.bin").string());
        std::size_t found = 0;
        for (const auto& t : manifest.at("tensors")) {
            std::string name = t.at("name");
            Tensor& dst = at(name);
            std::vector<std::int64_t> shape = t.at("shape").get<std::vector<std::int64_t>>();
            require(shape == dst.dims(), errc::data, "checkpoint: shape mismatch for " + name);
            reader.f32_array(dst.data(), static_cast<std::size_t>(dst.size()));
            ++found;
        }
        require(found == items_.size(), errc::data, "checkpoint: missing tensors");
        return manifest.value("extra", nlohmann::json::object());
    }

private:
    struct Item {
        std::string name;
        Tensor value;
    };
    std::vector<Item> items_;
    std::unordered_map<std::string, std::size_t> index_;
    std::int64_t total_ = 0;
};

}  // namespace gcdance
