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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gpd {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    void fill(double v);
    bool all_finite() const noexcept;

    /// Copies the listed rows into a new matrix.
    Matrix gather_rows(std::span<const std::size_t> indices) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// A @p a.rows() x @p b.cols() product.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Sum of squares of all entries.
double frobenius_sq(const Matrix& m);

/// Deterministic 64-bit generator. Distribution sampling is done here instead
/// of through <random> distributions so that streams are identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n);

    template <typename It>
    void shuffle(It first, It last)
    {
        auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 mixing of a seed with a stream tag; used to derive independent
/// sub-streams (per subject, per fold, per layer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct Parameter {
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    std::size_t step_count = 0;

    Parameter() = default;
    explicit Parameter(Matrix init);

    void zero_grad();
};

/// Uniform Glorot initialization in ±sqrt(6/(fan_in+fan_out)).
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// output = input·W + b (bias broadcast per row).
Matrix dense_forward(const Matrix& input, const Parameter& weights, const Parameter& bias);

/// Accumulates dL/dW and dL/db into the parameters' grad buffers and returns
/// dL/dinput (empty when @p want_input_grad is false).
Matrix dense_backward(const Matrix& input, const Matrix& grad_output, Parameter& weights,
                      Parameter& bias, bool want_input_grad = true);

Matrix relu(const Matrix& x);
/// Masks @p grad_output where the forward pre-activation was non-positive.
Matrix relu_backward(const Matrix& pre_activation, const Matrix& grad_output);

double sigmoid(double x) noexcept;

/// Row-wise softmax of logits / temperature.
Matrix softmax(const Matrix& logits, double temperature = 1.0);
Matrix log_softmax(const Matrix& logits, double temperature = 1.0);
/// Softmax over a single vector.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
double log_sum_exp(std::span<const double> values) noexcept;

/// Decoupled weight decay followed by a bias-corrected Adam update.
void adam_step(std::span<Parameter* const> params, const OptimizerConfig& cfg);

/// Evaluates the objective and populates the grad buffers of every parameter
/// it depends on. Implementations must not accumulate across calls.
using Objective = std::function<double()>;

/// Central-difference gradient check. Returns the max over all parameter
/// entries of |analytic - numeric| / max(1, |numeric|).
double grad_check(const Objective& objective, std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace gpd
