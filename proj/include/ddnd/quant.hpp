#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>

#include "ddnd/models.hpp"

namespace ddnd {

struct QuantizedTensor {
    Shape shape;
    std::vector<int8_t> data;
    float scale = 1.0f;
};

// Symmetric per-tensor int8: scale spans the largest magnitude, zero-point 0.
inline QuantizedTensor quantize(const Tensor& t) {
    QuantizedTensor q;
    q.shape = t.shape();
    q.data.resize(t.data().size());
    double mx = 0;
    for (double v : t.data()) {
        check(std::isfinite(v), "quantize: non-finite value");
        mx = std::max(mx, std::abs(v));
    }
    q.scale = mx > 0 ? static_cast<float>(mx / 127.0) : 1.0f;
    for (size_t i = 0; i < q.data.size(); ++i) {
        const double r = std::round(t.data()[i] / static_cast<double>(q.scale));
        q.data[i] = static_cast<int8_t>(std::clamp(r, -127.0, 127.0));
    }
    return q;
}

inline Tensor dequantize(const QuantizedTensor& q) {
    check(q.scale > 0, "dequantize: scale must be positive");
    std::vector<double> out(q.data.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(q.data[i]) * static_cast<double>(q.scale);
    return Tensor::from_vec(q.shape, std::move(out));
}

enum class SaveDtype : uint8_t { f32 = 0, f64 = 1, i8 = 2 };

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    check(static_cast<bool>(is), std::string("truncated payload reading ") + what);
    return v;
}

}  // namespace detail

// DDNDW1 container: magic, u32 tensor count, then per tensor a u16-length
// name, u8 dtype, u8 ndim, u32 dims, and the payload (int8 tensors carry their
// f32 scale first). Little-endian throughout.
inline size_t save_model(const WeightStore& ws, SaveDtype dtype, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "save_model: cannot open '" + path + "' for writing");
    os.write("DDNDW1", 6);
    detail::put<uint32_t>(os, static_cast<uint32_t>(ws.size()));
    for (const auto& [name, t] : ws) {
        check(name.size() <= 0xffff, "save_model: weight name too long");
        detail::put<uint16_t>(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<uint8_t>(os, static_cast<uint8_t>(dtype));
        detail::put<uint8_t>(os, static_cast<uint8_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) detail::put<uint32_t>(os, static_cast<uint32_t>(t.dim(i)));
        switch (dtype) {
            case SaveDtype::f32:
                for (double v : t.data()) detail::put<float>(os, static_cast<float>(v));
                break;
            case SaveDtype::f64:
                for (double v : t.data()) detail::put<double>(os, v);
                break;
            case SaveDtype::i8: {
                QuantizedTensor q = quantize(t);
                detail::put<float>(os, q.scale);
                os.write(reinterpret_cast<const char*>(q.data.data()),
                         static_cast<std::streamsize>(q.data.size()));
                break;
            }
        }
    }
    check(static_cast<bool>(os), "save_model: write failed for '" + path + "'");
    os.flush();
    const auto pos = os.tellp();
    check(pos >= 0, "save_model: cannot determine file size");
    return static_cast<size_t>(pos);
}

inline WeightStore load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "load_model: cannot open '" + path + "'");
    char magic[6];
    is.read(magic, 6);
    check(static_cast<bool>(is) && std::memcmp(magic, "DDNDW1", 6) == 0,
          "load_model: bad magic in '" + path + "'");
    const auto count = detail::take<uint32_t>(is, "tensor count");
    WeightStore ws;
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::take<uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        check(static_cast<bool>(is), "truncated payload reading tensor name");
        const auto dtype = detail::take<uint8_t>(is, "dtype");
        check(dtype <= 2, "load_model: unknown dtype " + std::to_string(int(dtype)));
        const auto ndim = detail::take<uint8_t>(is, "rank");
        Shape shape(ndim);
        long long numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(detail::take<uint32_t>(is, "dimension"));
            check(d >= 0, "load_model: negative dimension");
            numel *= d;
        }
        std::vector<double> data(static_cast<size_t>(numel));
        if (dtype == 0) {
            for (auto& v : data) v = detail::take<float>(is, "f32 payload");
        } else if (dtype == 1) {
            for (auto& v : data) v = detail::take<double>(is, "f64 payload");
        } else {
            const float scale = detail::take<float>(is, "int8 scale");
            std::vector<int8_t> q(static_cast<size_t>(numel));
            is.read(reinterpret_cast<char*>(q.data()), numel);
            check(static_cast<bool>(is), "truncated payload reading int8 data");
            for (size_t j = 0; j < q.size(); ++j)
                data[j] = static_cast<double>(q[j]) * static_cast<double>(scale);
        }
        check(ws.emplace(name, Tensor::from_vec(std::move(shape), std::move(data))).second,
              "load_model: duplicate tensor name '" + name + "'");
    }
    return ws;
}

}  // namespace ddnd
