/********************************************************************************
 * Copyright 2026 The GPD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 ********************************************************************************/


#include "gpd/nets.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gpd/errors.hpp"

namespace gpd {

namespace {

constexpr char kMagic[8] = {'G', 'P', 'D', 'C', 'K', 'P', 'T', '1'};

enum : std::uint64_t {
    kStreamLayer1 = 1,
    kStreamLayer2,
    kStreamLayer3,
    kStreamHead,
    kStreamProjection,
};

void check_width(const Matrix& x, std::size_t expected, const char* who)
{
    if (x.cols() != expected) {
        throw DimensionError(std::string(who) + ": expected input width " + std::to_string(expected) + ", got " +
                             std::to_string(x.cols()));
    }
}

std::uint64_t fnv1a(std::uint64_t h, std::span<const double> values)
{
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

void push_layer(std::vector<NamedTensor>& out, const std::string& name, const DenseLayer& layer)
{
    out.push_back({name + ".weight", layer.weight.value});
    out.push_back({name + ".bias", layer.bias.value});
}

void load_layer(const std::vector<NamedTensor>& tensors, const std::string& name, DenseLayer& layer)
{
    auto take = [&](const std::string& key, Parameter& p) {
        for (const auto& t : tensors) {
            if (t.name == key) {
                if (t.value.rows() != p.value.rows() || t.value.cols() != p.value.cols()) {
                    throw DimensionError("checkpoint tensor '" + key + "' has wrong shape");
                }
                p = Parameter(t.value);
                return;
            }
        }
        throw DataError("checkpoint is missing tensor '" + key + "'");
    };
    take(name + ".weight", layer.weight);
    take(name + ".bias", layer.bias);
}

void write_u64(std::ostream& os, std::uint64_t v)
{
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    }
    os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& is)
{
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
        throw DataError("checkpoint truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return v;
}

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng)
    : weight(glorot_uniform(in, out, rng)), bias(Matrix(1, out))
{
}

// ---------------------------------------------------------------------------
// Teacher

TeacherNet::TeacherNet(TeacherDims dims, std::uint64_t seed) : dims_(dims), seed_(seed)
{
    Rng r1(derive_seed(seed, kStreamLayer1));
    Rng r2(derive_seed(seed, kStreamLayer2));
    Rng r3(derive_seed(seed, kStreamLayer3));
    Rng rh(derive_seed(seed, kStreamHead));
    l1_ = DenseLayer(dims.input, dims.hidden1, r1);
    l2_ = DenseLayer(dims.hidden1, dims.hidden2, r2);
    l3_ = DenseLayer(dims.hidden2, dims.feature, r3);
    head_ = DenseLayer(dims.feature, 2, rh);
}

NetOutput TeacherNet::forward(const Matrix& gsr) const
{
    Cache cache;
    return forward(gsr, cache);
}

NetOutput TeacherNet::forward(const Matrix& gsr, Cache& cache) const
{
    check_width(gsr, dims_.input, "teacher_forward");
    cache.input = gsr;
    cache.pre1 = l1_.forward(gsr);
    cache.act1 = relu(cache.pre1);
    cache.pre2 = l2_.forward(cache.act1);
    cache.act2 = relu(cache.pre2);
    cache.features = l3_.forward(cache.act2);
    return {head_.forward(cache.features), cache.features};
}

void TeacherNet::backward(const Cache& cache, const Matrix& grad_logits, const Matrix& grad_features)
{
    check_mutable();
    Matrix g_feat = dense_backward(cache.features, grad_logits, head_.weight, head_.bias);
    if (!grad_features.empty()) {
        auto dst = g_feat.values();
        auto src = grad_features.values();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }
    Matrix g_act2 = dense_backward(cache.act2, g_feat, l3_.weight, l3_.bias);
    Matrix g_act1 = dense_backward(cache.act1, relu_backward(cache.pre2, g_act2), l2_.weight, l2_.bias);
    dense_backward(cache.input, relu_backward(cache.pre1, g_act1), l1_.weight, l1_.bias, false);
}

void TeacherNet::check_mutable() const
{
    if (frozen_) {
        throw ContractViolation("teacher is frozen; its parameters cannot be modified");
    }
}

std::vector<Parameter*> TeacherNet::parameters()
{
    check_mutable();
    return {&l1_.weight, &l1_.bias, &l2_.weight, &l2_.bias, &l3_.weight, &l3_.bias, &head_.weight, &head_.bias};
}

std::vector<NamedTensor> TeacherNet::tensors() const
{
    std::vector<NamedTensor> out;
    push_layer(out, "encoder.0", l1_);
    push_layer(out, "encoder.1", l2_);
    push_layer(out, "encoder.2", l3_);
    push_layer(out, "head", head_);
    return out;
}

void TeacherNet::load_tensors(const std::vector<NamedTensor>& tensors)
{
    check_mutable();
    load_layer(tensors, "encoder.0", l1_);
    load_layer(tensors, "encoder.1", l2_);
    load_layer(tensors, "encoder.2", l3_);
    load_layer(tensors, "head", head_);
}

std::uint64_t TeacherNet::checksum() const
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& t : tensors()) {
        h = fnv1a(h, t.value.values());
    }
    return h;
}

// ---------------------------------------------------------------------------
// Student

StudentNet::StudentNet(StudentDims dims, std::uint64_t seed) : dims_(dims), seed_(seed)
{
    if (!(dims.dropout >= 0.0 && dims.dropout < 1.0)) {
        throw ConfigError("student dropout must lie in [0, 1)");
    }
    Rng r1(derive_seed(seed, kStreamLayer1));
    Rng r2(derive_seed(seed, kStreamLayer2));
    Rng rh(derive_seed(seed, kStreamHead));
    l1_ = DenseLayer(dims.input, dims.hidden, r1);
    l2_ = DenseLayer(dims.hidden, dims.feature, r2);
    head_ = DenseLayer(dims.feature, 2, rh);
}

NetOutput StudentNet::forward(const Matrix& x) const
{
    Rng unused(0);
    Cache cache;
    return forward(x, Mode::Infer, unused, cache);
}

NetOutput StudentNet::forward(const Matrix& x, Mode mode, Rng& rng, Cache& cache) const
{
    check_width(x, dims_.input, "student_forward");
    cache.input = x;
    cache.pre1 = l1_.forward(x);
    cache.hidden = relu(cache.pre1);
    cache.mask = Matrix();
    if (mode == Mode::Train && dims_.dropout > 0.0) {
        const double keep = 1.0 - dims_.dropout;
        cache.mask = Matrix(cache.hidden.rows(), cache.hidden.cols());
        auto mask = cache.mask.values();
        auto h = cache.hidden.values();
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
            h[i] *= mask[i];
        }
    }
    cache.features = l2_.forward(cache.hidden);
    return {head_.forward(cache.features), cache.features};
}

void StudentNet::backward(const Cache& cache, const Matrix& grad_logits, const Matrix& grad_features)
{
    Matrix g_feat = dense_backward(cache.features, grad_logits, head_.weight, head_.bias);
    if (!grad_features.empty()) {
        auto dst = g_feat.values();
        auto src = grad_features.values();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }
    Matrix g_hidden = dense_backward(cache.hidden, g_feat, l2_.weight, l2_.bias);
    if (!cache.mask.empty()) {
        auto g = g_hidden.values();
        auto mask = cache.mask.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] *= mask[i];
        }
    }
    dense_backward(cache.input, relu_backward(cache.pre1, g_hidden), l1_.weight, l1_.bias, false);
}

std::vector<Parameter*> StudentNet::parameters()
{
    return {&l1_.weight, &l1_.bias, &l2_.weight, &l2_.bias, &head_.weight, &head_.bias};
}

std::vector<NamedTensor> StudentNet::tensors() const
{
    std::vector<NamedTensor> out;
    push_layer(out, "encoder.0", l1_);
    push_layer(out, "encoder.1", l2_);
    push_layer(out, "head", head_);
    return out;
}

void StudentNet::load_tensors(const std::vector<NamedTensor>& tensors)
{
    load_layer(tensors, "encoder.0", l1_);
    load_layer(tensors, "encoder.1", l2_);
    load_layer(tensors, "head", head_);
}

std::uint64_t StudentNet::checksum() const
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& t : tensors()) {
        h = fnv1a(h, t.value.values());
    }
    return h;
}

// ---------------------------------------------------------------------------
// Projection

ProjectionHead::ProjectionHead(std::size_t in, std::size_t out, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, kStreamProjection));
    layer_ = DenseLayer(in, out, rng);
}

Matrix ProjectionHead::project(const Matrix& features) const
{
    check_width(features, layer_.in_dim(), "project");
    return layer_.forward(features);
}

Matrix ProjectionHead::backward(const Matrix& features, const Matrix& grad_projected)
{
    return dense_backward(features, grad_projected, layer_.weight, layer_.bias);
}

std::vector<Parameter*> ProjectionHead::parameters() { return {&layer_.weight, &layer_.bias}; }

std::vector<NamedTensor> ProjectionHead::tensors() const
{
    std::vector<NamedTensor> out;
    push_layer(out, "projection", layer_);
    return out;
}

void ProjectionHead::load_tensors(const std::vector<NamedTensor>& tensors) { load_layer(tensors, "projection", layer_); }

std::vector<double> deception_probability(const Matrix& logits)
{
    std::vector<double> p(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        p[r] = sigmoid(logits(r, 1) - logits(r, 0));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    nlohmann::json header = ckpt.meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& t : ckpt.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
    }
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot write checkpoint " + path.string());
    }
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ckpt.tensors) {
        for (double v : t.value.values()) {
            write_u64(os, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!os) {
        throw DataError("failed writing checkpoint " + path.string());
    }
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("not a checkpoint file: " + path.string());
    }
    const std::uint64_t header_len = read_u64(is);
    std::string text(header_len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) {
        throw DataError("checkpoint header truncated: " + path.string());
    }
    Checkpoint ckpt;
    try {
        ckpt.meta = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    for (const auto& entry : ckpt.meta.at("tensors")) {
        const std::size_t rows = entry.at("shape").at(0).get<std::size_t>();
        const std::size_t cols = entry.at("shape").at(1).get<std::size_t>();
        std::vector<double> data(rows * cols);
        for (double& v : data) {
            v = std::bit_cast<double>(read_u64(is));
        }
        ckpt.tensors.push_back({entry.at("name").get<std::string>(), Matrix(rows, cols, std::move(data))});
    }
    ckpt.meta.erase("tensors");
    return ckpt;
}

Checkpoint to_checkpoint(const TeacherNet& teacher)
{
    const auto& d = teacher.dims();
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "teacher"},
                 {"seed", teacher.seed()},
                 {"epoch", teacher.trained_epochs},
                 {"frozen", teacher.frozen()},
                 {"dims", {d.input, d.hidden1, d.hidden2, d.feature}}};
    ckpt.tensors = teacher.tensors();
    return ckpt;
}

TeacherNet teacher_from_checkpoint(const Checkpoint& ckpt)
{
    if (ckpt.meta.value("kind", "") != "teacher") {
        throw DataError("checkpoint does not hold a teacher");
    }
    const auto& d = ckpt.meta.at("dims");
    TeacherDims dims{d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>(),
                     d.at(3).get<std::size_t>()};
    TeacherNet teacher(dims, ckpt.meta.at("seed").get<std::uint64_t>());
    teacher.load_tensors(ckpt.tensors);
    teacher.trained_epochs = ckpt.meta.value("epoch", 0);
    if (ckpt.meta.value("frozen", false)) {
        teacher.freeze();
    }
    return teacher;
}

Checkpoint to_checkpoint(const StudentNet& student, const ProjectionHead& projection, std::uint64_t seed, int epoch)
{
    const auto& d = student.dims();
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "student"},
                 {"seed", seed},
                 {"epoch", epoch},
                 {"dims", {d.input, d.hidden, d.feature}},
                 {"dropout", d.dropout},
                 {"projection_dim", projection.out_dim()}};
    ckpt.tensors = student.tensors();
    for (auto& t : projection.tensors()) {
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

std::pair<StudentNet, ProjectionHead> student_from_checkpoint(const Checkpoint& ckpt)
{
    if (ckpt.meta.value("kind", "") != "student") {
        throw DataError("checkpoint does not hold a student");
    }
    const auto& d = ckpt.meta.at("dims");
    StudentDims dims{d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>(),
                     ckpt.meta.at("dropout").get<double>()};
    const auto seed = ckpt.meta.at("seed").get<std::uint64_t>();
    StudentNet student(dims, seed);
    ProjectionHead projection(dims.feature, ckpt.meta.at("projection_dim").get<std::size_t>(), seed);
    student.load_tensors(ckpt.tensors);
    projection.load_tensors(ckpt.tensors);
    return {std::move(student), std::move(projection)};
}

}  // namespace gpd
