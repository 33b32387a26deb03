#pragma once

#include <nlohmann/json.hpp>
#include <map>
#include <string>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/io.hpp"
#include "gcdance/rotation.hpp"

namespace gcdance {

// Joint hierarchy driving forward kinematics. Joints are topologically sorted
// (parent index < child index, root parent = -1). Ground plane is z = 0 and
// up is +z everywhere in this codebase.
struct Skeleton {
    std::vector<std::string> names;
    std::vector<int> parents;
    std::vector<Vec3> offsets;
    std::map<std::string, std::vector<int>> groups;

    int joint_count() const { return static_cast<int>(names.size()); }

    // Frame layout: J*6 rotation dims (6 per joint, joint-major), 3 root
    // translation dims, 4 foot-contact flags.
    std::int64_t frame_dim() const { return static_cast<std::int64_t>(joint_count()) * 6 + 3 + 4; }
    std::int64_t trans_col() const { return static_cast<std::int64_t>(joint_count()) * 6; }
    std::int64_t contact_col() const { return trans_col() + 3; }

    const std::vector<int>& group(const std::string& name) const {
        auto it = groups.find(name);
        require(it != groups.end(), errc::data, "skeleton: missing joint group '" + name + "'");
        return it->second;
    }
    bool has_group(const std::string& name) const { return groups.count(name) != 0; }

    // Joints not in the hands group, in index order.
    std::vector<int> body_joints() const {
        std::vector<char> is_hand(static_cast<std::size_t>(joint_count()), 0);
        if (has_group("hands"))
            for (int j : group("hands")) is_hand[static_cast<std::size_t>(j)] = 1;
        std::vector<int> body;
        for (int j = 0; j < joint_count(); ++j)
            if (!is_hand[static_cast<std::size_t>(j)]) body.push_back(j);
        return body;
    }

    // Contact marker joints in flag order: [heel_l, toe_l, heel_r, toe_r].
    std::array<int, 4> contact_markers() const {
        const auto& heels = group("heels");
        const auto& toes = group("toes");
        require(heels.size() == 2 && toes.size() == 2, errc::data,
                "skeleton: heels/toes groups must list [left, right]");
        return {heels[0], toes[0], heels[1], toes[1]};
    }

    void validate() const {
        require(!names.empty(), errc::data, "skeleton: no joints");
        require(parents.size() == names.size() && offsets.size() == names.size(), errc::data,
                "skeleton: field length mismatch");
        int roots = 0;
        for (int j = 0; j < joint_count(); ++j) {
            int p = parents[static_cast<std::size_t>(j)];
            if (p < 0) {
                ++roots;
                require(j == 0, errc::data, "skeleton: root must be joint 0");
            } else {
                require(p < j, errc::data, "skeleton: parents must precede children");
            }
        }
        require(roots == 1, errc::data, "skeleton: exactly one root required");
        for (const auto& [gname, joints] : groups)
            for (int j : joints)
                require(j >= 0 && j < joint_count(), errc::data,
                        "skeleton: group '" + gname + "' references invalid joint");
    }
};

inline nlohmann::json skeleton_to_json(const Skeleton& s) {
    nlohmann::json j;
    j["joints"] = nlohmann::json::array();
    for (int i = 0; i < s.joint_count(); ++i) {
        j["joints"].push_back({{"name", s.names[static_cast<std::size_t>(i)]},
                               {"parent", s.parents[static_cast<std::size_t>(i)]},
                               {"offset", s.offsets[static_cast<std::size_t>(i)]}});
    }
    j["groups"] = nlohmann::json::object();
    for (const auto& [gname, joints] : s.groups) {
        nlohmann::json names = nlohmann::json::array();
        for (int idx : joints) names.push_back(s.names[static_cast<std::size_t>(idx)]);
        j["groups"][gname] = names;
    }
    return j;
}

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
    Skeleton s;
    std::map<std::string, int> by_name;
    for (const auto& joint : j.at("joints")) {
        std::string name = joint.at("name");
        require(!by_name.count(name), errc::data, "skeleton: duplicate joint name " + name);
        by_name[name] = static_cast<int>(s.names.size());
        s.names.push_back(name);
        s.parents.push_back(joint.at("parent").get<int>());
        auto off = joint.at("offset");
        require(off.size() == 3, errc::data, "skeleton: offset must have 3 entries");
        s.offsets.push_back({off[0].get<double>(), off[1].get<double>(), off[2].get<double>()});
    }
    if (j.contains("groups")) {
        for (const auto& [gname, members] : j.at("groups").items()) {
            std::vector<int> idx;
            for (const auto& m : members) {
                auto it = by_name.find(m.get<std::string>());
                require(it != by_name.end(), errc::data,
                        "skeleton: group '" + gname + "' references unknown joint");
                idx.push_back(it->second);
            }
            s.groups[gname] = idx;
        }
    }
    s.validate();
    return s;
}

inline Skeleton load_skeleton(const fs::path& path) {
    return skeleton_from_json(nlohmann::json::parse(read_file(path)));
}

inline void save_skeleton(const Skeleton& s, const fs::path& path) {
    atomic_write(path, skeleton_to_json(s).dump(2) + "\n");
}

namespace detail {

inline void add_joint(Skeleton& s, const std::string& name, int parent, Vec3 offset) {
    s.names.push_back(name);
    s.parents.push_back(parent);
    s.offsets.push_back(offset);
}

inline int joint_index(const Skeleton& s, const std::string& name) {
    for (int i = 0; i < s.joint_count(); ++i)
        if (s.names[static_cast<std::size_t>(i)] == name) return i;
    fail(errc::data, "skeleton: unknown joint " + name);
}

}  // namespace detail

// 24-joint humanoid (SMPL-like body). Offsets are plausible proportions in
// meters; z up, toes pointing +y.
inline Skeleton skeleton_preset24() {
    Skeleton s;
    using detail::add_joint;
    add_joint(s, "pelvis", -1, {0, 0, 0});
    add_joint(s, "l_hip", 0, {0.09, 0, -0.06});
    add_joint(s, "r_hip", 0, {-0.09, 0, -0.06});
    add_joint(s, "spine1", 0, {0, 0, 0.11});
    add_joint(s, "l_knee", 1, {0, 0, -0.38});
    add_joint(s, "r_knee", 2, {0, 0, -0.38});
    add_joint(s, "spine2", 3, {0, 0, 0.12});
    add_joint(s, "l_ankle", 4, {0, 0, -0.40});
    add_joint(s, "r_ankle", 5, {0, 0, -0.40});
    add_joint(s, "spine3", 6, {0, 0, 0.12});
    add_joint(s, "l_foot", 7, {0, 0.13, -0.02});
    add_joint(s, "r_foot", 8, {0, 0.13, -0.02});
    add_joint(s, "neck", 9, {0, 0, 0.12});
    add_joint(s, "l_collar", 9, {0.06, 0, 0.08});
    add_joint(s, "r_collar", 9, {-0.06, 0, 0.08});
    add_joint(s, "head", 12, {0, 0, 0.12});
    add_joint(s, "l_shoulder", 13, {0.10, 0, 0});
    add_joint(s, "r_shoulder", 14, {-0.10, 0, 0});
    add_joint(s, "l_elbow", 16, {0.26, 0, 0});
    add_joint(s, "r_elbow", 17, {-0.26, 0, 0});
    add_joint(s, "l_wrist", 18, {0.25, 0, 0});
    add_joint(s, "r_wrist", 19, {-0.25, 0, 0});
    add_joint(s, "l_palm", 20, {0.08, 0, 0});
    add_joint(s, "r_palm", 21, {-0.08, 0, 0});
    s.groups["legs"] = {1, 2, 4, 5, 7, 8, 10, 11};
    s.groups["upper"] = {3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23};
    s.groups["heels"] = {7, 8};
    s.groups["toes"] = {10, 11};
    s.groups["neck"] = {12};
    s.groups["hands"] = {};
    s.validate();
    return s;
}

// 52-joint full-body preset: the 24-joint body plus 14 finger joints per hand
// (thumb x2, four fingers x3) so the frame dimension is 52*6 + 3 + 4 = 319.
inline Skeleton skeleton_preset52() {
    Skeleton s = skeleton_preset24();
    s.groups.clear();
    using detail::add_joint;
    auto add_hand = [&](const std::string& side, int palm, double dir) {
        const double seg = 0.03;
        int thumb1 = s.joint_count();
        add_joint(s, side + "_thumb1", palm, {dir * 0.02, 0.03, 0});
        add_joint(s, side + "_thumb2", thumb1, {dir * 0.02, 0.02, 0});
        const char* fingers[] = {"index", "middle", "ring", "pinky"};
        const double ys[] = {0.025, 0.008, -0.008, -0.025};
        for (int f = 0; f < 4; ++f) {
            int base = s.joint_count();
            add_joint(s, side + "_" + fingers[f] + "1", palm, {dir * 0.04, ys[f], 0});
            add_joint(s, side + "_" + fingers[f] + "2", base, {dir * seg, 0, 0});
            add_joint(s, side + "_" + fingers[f] + "3", base + 1, {dir * seg, 0, 0});
        }
    };
    int l_palm = detail::joint_index(s, "l_palm");
    int r_palm = detail::joint_index(s, "r_palm");
    add_hand("l", l_palm, 1.0);
    add_hand("r", r_palm, -1.0);

    std::vector<int> left, right, hands;
    for (int j = 24; j < 38; ++j) left.push_back(j);
    for (int j = 38; j < 52; ++j) right.push_back(j);
    for (int j = 24; j < 52; ++j) hands.push_back(j);
    s.groups["hands"] = hands;
    s.groups["left_hand"] = left;
    s.groups["right_hand"] = right;
    s.groups["legs"] = {1, 2, 4, 5, 7, 8, 10, 11};
    s.groups["upper"] = {3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23};
    s.groups["heels"] = {7, 8};
    s.groups["toes"] = {10, 11};
    s.groups["neck"] = {12};
    s.validate();
    require(s.frame_dim() == 319, errc::data, "preset52: unexpected frame dimension");
    return s;
}

// Rest height of the lowest contact marker below the root; synthetic data
// places the root so markers sit just above the ground.
inline double rest_root_height(const Skeleton& s) {
    std::vector<Vec3> pos(static_cast<std::size_t>(s.joint_count()), Vec3{0, 0, 0});
    for (int j = 1; j < s.joint_count(); ++j) {
        const Vec3& par = pos[static_cast<std::size_t>(s.parents[static_cast<std::size_t>(j)])];
        const Vec3& off = s.offsets[static_cast<std::size_t>(j)];
        pos[static_cast<std::size_t>(j)] = {par[0] + off[0], par[1] + off[1], par[2] + off[2]};
    }
    double lowest = 0.0;
    for (int j : s.contact_markers()) lowest = std::min(lowest, pos[static_cast<std::size_t>(j)][2]);
    return -lowest;
}

}  // namespace gcdance
