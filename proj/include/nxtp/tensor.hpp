#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace nxtp {

template <typename T>
struct Tensor {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<T> data;

    static Tensor zeros(std::string name, std::vector<uint32_t> dims) {
        Tensor t;
        t.name = std::move(name);
        t.dims = std::move(dims);
        size_t n = 1;
        for (uint32_t d : t.dims) n *= d;
        t.data.assign(n, T{0});
        return t;
    }

    size_t size() const { return data.size(); }
    uint32_t rows() const { return dims.empty() ? 0 : dims[0]; }
    uint32_t cols() const { return dims.size() < 2 ? 1 : dims[1]; }

    T* row(size_t i) { return data.data() + i * cols(); }
    const T* row(size_t i) const { return data.data() + i * cols(); }

    T& at(size_t i, size_t j) { return data[i * cols() + j]; }
    T at(size_t i, size_t j) const { return data[i * cols() + j]; }
};

} // namespace nxtp
