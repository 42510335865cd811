#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace iavc {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

// Dense row-major array of doubles with rank 1 to 3.
//
// Rank-1 tensors act as a single row wherever a matrix is expected, so
// rows() == 1 and cols() == extent for them.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor vector(std::size_t n, double fill = 0.0);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);
    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
    static Tensor normal(Shape shape, double mean, double stddev, Rng& rng);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    void fill(double v);
    bool all_finite() const;
    double max_abs() const;

    // Bitwise equality of shape and payload.
    bool operator==(const Tensor& other) const;

    std::string shape_string() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t element_count(const Shape& shape);

// Sine/cosine position table: even column 2i holds sin(p / 10000^(2i/d)),
// odd column 2i+1 holds cos of the same angle.
Tensor sinusoidal_positions(std::size_t n, std::size_t d);

}  // namespace iavc
