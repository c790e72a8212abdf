#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qhd::nn {

/// 64-byte aligned storage. Vectorized reductions peel by address, so a fixed
/// alignment keeps results bit-identical from run to run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlignment); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
        return true;
    }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of doubles with a runtime shape.
class ArrayND {
public:
    ArrayND() = default;
    explicit ArrayND(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
    ArrayND(std::vector<std::size_t> shape, const std::vector<double>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (data_.size() != element_count(shape_)) {
            throw std::invalid_argument("ArrayND: buffer length " + std::to_string(data_.size()) +
                                        " does not match shape");
        }
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
    }

    [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t extent(std::size_t dim) const { return shape_.at(dim); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] double* data() noexcept { return data_.data(); }
    [[nodiscard]] const double* data() const noexcept { return data_.data(); }
    [[nodiscard]] std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Same buffer, new shape; the element count must not change.
    void reshape(std::vector<std::size_t> shape) {
        if (element_count(shape) != data_.size()) throw std::invalid_argument("ArrayND::reshape: size mismatch");
        shape_ = std::move(shape);
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const ArrayND&, const ArrayND&) = default;

private:
    std::vector<std::size_t> shape_;
    AlignedBuffer data_;
};

/// Per-sample feature-map geometry (channels, height, width).
struct Shape3 {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    [[nodiscard]] std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

}  // namespace qhd::nn
