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


#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpd/numerics.hpp"

namespace gpd {

/// Dense layer owning its weight (in x out) and bias (1 x out).
struct DenseLayer {
    Parameter weight;
    Parameter bias;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_dim() const noexcept { return weight.value.rows(); }
    std::size_t out_dim() const noexcept { return weight.value.cols(); }
    Matrix forward(const Matrix& x) const { return dense_forward(x, weight, bias); }
};

struct NetOutput {
    Matrix logits;    ///< rows x 2, class 1 is deception
    Matrix features;  ///< rows x feature_dim
};

/// Named view of a parameter, in checkpoint order.
struct NamedTensor {
    std::string name;
    Matrix value;
};

struct TeacherDims {
    std::size_t input = 448;
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 128;
    std::size_t feature = 80;
};

/// GSR encoder 448 -> 256 -> 128 -> 80 (ReLU on hidden layers) plus an 80 -> 2 head.
class TeacherNet {
public:
    struct Cache {
        Matrix input;
        Matrix pre1;
        Matrix act1;
        Matrix pre2;
        Matrix act2;
        Matrix features;
    };

    TeacherNet() = default;
    TeacherNet(TeacherDims dims, std::uint64_t seed);

    const TeacherDims& dims() const noexcept { return dims_; }
    std::uint64_t seed() const noexcept { return seed_; }

    NetOutput forward(const Matrix& gsr) const;
    NetOutput forward(const Matrix& gsr, Cache& cache) const;
    /// Accumulates parameter gradients. @p grad_features may be empty.
    void backward(const Cache& cache, const Matrix& grad_logits, const Matrix& grad_features);

    /// Throws ContractViolation once frozen.
    std::vector<Parameter*> parameters();
    void freeze() noexcept { frozen_ = true; }
    bool frozen() const noexcept { return frozen_; }

    std::vector<NamedTensor> tensors() const;
    void load_tensors(const std::vector<NamedTensor>& tensors);
    /// FNV-1a over the raw bytes of every parameter value.
    std::uint64_t checksum() const;

    int trained_epochs = 0;

private:
    void check_mutable() const;

    TeacherDims dims_;
    std::uint64_t seed_ = 0;
    DenseLayer l1_, l2_, l3_, head_;
    bool frozen_ = false;
};

struct StudentDims {
    std::size_t input = 768;
    std::size_t hidden = 512;
    std::size_t feature = 256;
    double dropout = 0.3;
};

enum class Mode { Train, Infer };

/// Non-contact encoder 768 -> 512 (ReLU, dropout) -> 256 re-embedding, head 256 -> 2.
class StudentNet {
public:
    struct Cache {
        Matrix input;
        Matrix pre1;
        Matrix mask;  ///< inverted-dropout scale per hidden unit; empty in infer mode
        Matrix hidden;
        Matrix features;
    };

    StudentNet() = default;
    StudentNet(StudentDims dims, std::uint64_t seed);

    const StudentDims& dims() const noexcept { return dims_; }
    std::uint64_t seed() const noexcept { return seed_; }

    NetOutput forward(const Matrix& x) const;
    /// Train mode draws a dropout mask from @p rng; infer mode ignores it.
    NetOutput forward(const Matrix& x, Mode mode, Rng& rng, Cache& cache) const;
    /// @p grad_features is added to the gradient flowing back from the head; may be empty.
    void backward(const Cache& cache, const Matrix& grad_logits, const Matrix& grad_features);

    std::vector<Parameter*> parameters();
    std::vector<NamedTensor> tensors() const;
    void load_tensors(const std::vector<NamedTensor>& tensors);
    std::uint64_t checksum() const;

private:
    StudentDims dims_;
    std::uint64_t seed_ = 0;
    DenseLayer l1_, l2_, head_;
};

/// Learnable map from student features into teacher feature space.
class ProjectionHead {
public:
    ProjectionHead() = default;
    ProjectionHead(std::size_t in, std::size_t out, std::uint64_t seed);
    explicit ProjectionHead(DenseLayer layer) : layer_(std::move(layer)) {}

    Matrix project(const Matrix& features) const;
    /// Accumulates parameter grads and returns dL/dfeatures.
    Matrix backward(const Matrix& features, const Matrix& grad_projected);

    std::size_t in_dim() const noexcept { return layer_.in_dim(); }
    std::size_t out_dim() const noexcept { return layer_.out_dim(); }
    std::vector<Parameter*> parameters();
    std::vector<NamedTensor> tensors() const;
    void load_tensors(const std::vector<NamedTensor>& tensors);

private:
    DenseLayer layer_;
};

/// Deceptive-class probability softmax(z)_1 per row.
std::vector<double> deception_probability(const Matrix& logits);

/// Checkpoint file: 8-byte magic "GPDCKPT1", little-endian u64 header length,
/// UTF-8 JSON header, then each tensor as little-endian float64 in header order.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<NamedTensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const TeacherNet& teacher);
TeacherNet teacher_from_checkpoint(const Checkpoint& ckpt);
Checkpoint to_checkpoint(const StudentNet& student, const ProjectionHead& projection, std::uint64_t seed, int epoch);
std::pair<StudentNet, ProjectionHead> student_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gpd
