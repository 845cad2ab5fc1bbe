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


#include "gpd/numerics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gpd/errors.hpp"

namespace gpd {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }
MutMap view(Matrix& m) { return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())); }

std::string shape(const Matrix& m)
{
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

std::uint64_t splitmix64(std::uint64_t& x)
{
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows)
{
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const
{
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape(a) + " by " + shape(b));
    }
    Matrix out(a.rows(), b.cols());
    view(out).noalias() = view(a) * view(b);
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: " + shape(a) + "^T by " + shape(b));
    }
    Matrix out(a.cols(), b.cols());
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: " + shape(a) + " by " + shape(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

double frobenius_sq(const Matrix& m)
{
    double s = 0.0;
    for (double v : m.values()) {
        s += v * v;
    }
    return s;
}

Rng::Rng(std::uint64_t seed)
{
    std::uint64_t x = seed;
    for (auto& s : state_) {
        s = splitmix64(x);
    }
}

std::uint64_t Rng::next_u64()
{
    // xoshiro256**
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

__extension__ using u128 = unsigned __int128;

std::size_t Rng::index(std::size_t n)
{
    if (n == 0) {
        throw ConfigError("Rng::index: empty range");
    }
    // Lemire's nearly-divisionless bounded draw with rejection.
    const std::uint64_t bound = n;
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t x = next_u64();
        u128 m = static_cast<u128>(x) * bound;
        if (static_cast<std::uint64_t>(m) >= threshold) {
            return static_cast<std::size_t>(m >> 64);
        }
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t x = seed ^ (stream * 0xD1B54A32D192ED03ULL);
    splitmix64(x);
    return splitmix64(x);
}

Parameter::Parameter(Matrix init)
    : value(std::move(init)),
      grad(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols())
{
}

void Parameter::zero_grad() { grad.fill(0.0); }

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.values()) {
        v = rng.uniform(-limit, limit);
    }
    return w;
}

void OptimizerConfig::validate() const
{
    if (!(learning_rate > 0.0)) {
        throw ConfigError("optimizer.learning_rate must be > 0");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("optimizer.weight_decay must be >= 0");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("optimizer.epsilon must be > 0");
    }
}

Matrix dense_forward(const Matrix& input, const Parameter& weights, const Parameter& bias)
{
    if (input.cols() != weights.value.rows()) {
        throw DimensionError("dense_forward: input " + shape(input) + " vs weights " + shape(weights.value));
    }
    if (bias.value.rows() != 1 || bias.value.cols() != weights.value.cols()) {
        throw DimensionError("dense_forward: bias " + shape(bias.value) + " vs weights " + shape(weights.value));
    }
    Matrix out = matmul(input, weights.value);
    auto b = bias.value.row(0);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += b[c];
        }
    }
    return out;
}

Matrix dense_backward(const Matrix& input, const Matrix& grad_output, Parameter& weights,
                      Parameter& bias, bool want_input_grad)
{
    if (grad_output.rows() != input.rows() || grad_output.cols() != weights.value.cols()) {
        throw DimensionError("dense_backward: grad " + shape(grad_output) + " for input " + shape(input));
    }
    view(weights.grad).noalias() += view(input).transpose() * view(grad_output);
    auto gb = bias.grad.row(0);
    for (std::size_t r = 0; r < grad_output.rows(); ++r) {
        auto row = grad_output.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            gb[c] += row[c];
        }
    }
    if (!want_input_grad) {
        return {};
    }
    return matmul_nt(grad_output, weights.value);
}

Matrix relu(const Matrix& x)
{
    Matrix out = x;
    for (double& v : out.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Matrix relu_backward(const Matrix& pre_activation, const Matrix& grad_output)
{
    Matrix out = grad_output;
    auto pre = pre_activation.values();
    auto g = out.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(pre[i] > 0.0)) {
            g[i] = 0.0;
        }
    }
    return out;
}

double sigmoid(double x) noexcept
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> values) noexcept
{
    double m = *std::max_element(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) {
        s += std::exp(v - m);
    }
    return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits, double temperature)
{
    if (!(temperature > 0.0)) {
        throw ConfigError("softmax temperature must be > 0");
    }
    std::vector<double> out(logits.size());
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw NumericError("softmax: non-finite logit");
        }
        m = std::max(m, v / temperature);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] / temperature - m);
        s += out[i];
    }
    for (double& v : out) {
        v /= s;
    }
    return out;
}

Matrix softmax(const Matrix& logits, double temperature)
{
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto p = softmax(logits.row(r), temperature);
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

Matrix log_softmax(const Matrix& logits, double temperature)
{
    if (!(temperature > 0.0)) {
        throw ConfigError("log_softmax temperature must be > 0");
    }
    if (!logits.all_finite()) {
        throw NumericError("log_softmax: non-finite logit");
    }
    Matrix out(logits.rows(), logits.cols());
    std::vector<double> scaled(logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            scaled[c] = row[c] / temperature;
        }
        double lse = log_sum_exp(scaled);
        for (std::size_t c = 0; c < row.size(); ++c) {
            out(r, c) = scaled[c] - lse;
        }
    }
    return out;
}

void adam_step(std::span<Parameter* const> params, const OptimizerConfig& cfg)
{
    for (Parameter* p : params) {
        p->step_count += 1;
        const double t = static_cast<double>(p->step_count);
        const double correction1 = 1.0 - std::pow(cfg.beta1, t);
        const double correction2 = 1.0 - std::pow(cfg.beta2, t);
        const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        auto value = p->value.values();
        auto grad = p->grad.values();
        auto m = p->adam_m.values();
        auto v = p->adam_v.values();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            value[i] = value[i] * decay - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
            if (!std::isfinite(value[i])) {
                throw NumericError("adam_step: parameter overflow");
            }
        }
    }
}

double grad_check(const Objective& objective, std::span<Parameter* const> params, double eps)
{
    std::size_t total = 0;
    for (const Parameter* p : params) {
        total += p->value.size();
    }
    if (total > 10000) {
        throw DimensionError("grad_check: " + std::to_string(total) + " parameters exceeds 10^4");
    }

    auto zero_all = [&] {
        for (Parameter* p : params) {
            p->zero_grad();
        }
    };

    zero_all();
    objective();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const Parameter* p : params) {
        analytic.push_back(p->grad);
    }

    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto value = params[k]->value.values();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + eps;
            zero_all();
            const double up = objective();
            value[i] = saved - eps;
            zero_all();
            const double down = objective();
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double err = std::abs(analytic[k].values()[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    zero_all();
    return worst;
}

}  // namespace gpd
