#include <catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "ddnd/models.hpp"
#include "ddnd/quant.hpp"

using namespace ddnd;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("quantize degenerate and hand cases", "[quant]") {
    QuantizedTensor z = quantize(Tensor::zeros({2, 3}));
    REQUIRE(z.scale == 1.0f);
    for (int8_t q : z.data) REQUIRE(q == 0);

    QuantizedTensor q = quantize(Tensor::from_vec({3}, {-1.0, 0.5, 1.0}));
    REQUIRE(q.scale == Approx(1.0 / 127.0).margin(1e-9));
    REQUIRE(int(q.data[0]) == -127);
    REQUIRE(int(q.data[1]) == 64);
    REQUIRE(int(q.data[2]) == 127);
    Tensor back = dequantize(q);
    REQUIRE(back[0] == Approx(-1.0).margin(1e-6));
    REQUIRE(back[1] == Approx(64.0 / 127.0).margin(1e-6));
    REQUIRE(back[2] == Approx(1.0).margin(1e-6));
}

TEST_CASE("quantize round-trip error bound", "[quant]") {
    Rng rng(2);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor t = Tensor::uniform({4, 17}, rng, -5, 5);
        QuantizedTensor q = quantize(t);
        Tensor back = dequantize(q);
        const double bound = 0.5 * double(q.scale) * (1.0 + 1e-6);
        for (long long i = 0; i < t.numel(); ++i)
            REQUIRE(std::abs(back[i] - t[i]) <= bound);
    }
}

TEST_CASE("quantize is idempotent on already-quantized values", "[quant]") {
    Rng rng(3);
    Tensor t = Tensor::uniform({50}, rng, -2, 2);
    QuantizedTensor q1 = quantize(t);
    QuantizedTensor q2 = quantize(dequantize(q1));
    REQUIRE(q2.scale == q1.scale);
    REQUIRE(q2.data == q1.data);
}

TEST_CASE("quantize rejects non-finite input", "[quant]") {
    REQUIRE_THROWS_WITH(quantize(Tensor::from_vec({2}, {1.0, std::nan("")})),
                        ContainsSubstring("non-finite"));
}

TEST_CASE("model file round trips by dtype", "[quant]") {
    Rng rng(4);
    WeightStore ws;
    ws["a.w"] = Tensor::uniform({2, 3, 3, 3}, rng, -1, 1);
    ws["a.b"] = Tensor::uniform({2}, rng, -1, 1);
    ws["b.w"] = Tensor::uniform({5, 4}, rng, -3, 3);

    const std::string p64 = tmp_path("ddnd_q_f64.bin");
    save_model(ws, SaveDtype::f64, p64);
    WeightStore r64 = load_model(p64);
    REQUIRE(r64.size() == ws.size());
    for (const auto& [name, t] : ws) {
        REQUIRE(r64.at(name).shape() == t.shape());
        REQUIRE(r64.at(name).data() == t.data());
    }

    const std::string p32 = tmp_path("ddnd_q_f32.bin");
    save_model(ws, SaveDtype::f32, p32);
    WeightStore r32 = load_model(p32);
    for (const auto& [name, t] : ws)
        for (long long i = 0; i < t.numel(); ++i)
            REQUIRE(r32.at(name)[i] == double(float(t[i])));

    const std::string p8 = tmp_path("ddnd_q_i8.bin");
    save_model(ws, SaveDtype::i8, p8);
    WeightStore r8 = load_model(p8);
    for (const auto& [name, t] : ws) {
        Tensor expect = dequantize(quantize(t));
        REQUIRE(r8.at(name).data() == expect.data());
    }
    fs::remove(p64);
    fs::remove(p32);
    fs::remove(p8);
}

TEST_CASE("int8 file is at most 30 percent of the float file", "[quant]") {
    Rng rng(5);
    WeightStore ws = init_depthnet(NetworkConfig::student(), rng);
    const std::string p32 = tmp_path("ddnd_ratio_f32.bin");
    const std::string p8 = tmp_path("ddnd_ratio_i8.bin");
    const size_t n32 = save_model(ws, SaveDtype::f32, p32);
    const size_t n8 = save_model(ws, SaveDtype::i8, p8);
    REQUIRE(n32 == fs::file_size(p32));
    REQUIRE(n8 == fs::file_size(p8));
    REQUIRE(double(n8) / double(n32) <= 0.30);
    fs::remove(p32);
    fs::remove(p8);
}

TEST_CASE("load_model rejects malformed files", "[quant]") {
    const std::string bad = tmp_path("ddnd_q_bad.bin");
    {
        std::ofstream os(bad, std::ios::binary);
        os.write("NOPE42", 6);
    }
    REQUIRE_THROWS_WITH(load_model(bad), ContainsSubstring("bad magic"));

    WeightStore ws;
    ws["w"] = Tensor::from_vec({4}, {1, 2, 3, 4});
    const std::string whole = tmp_path("ddnd_q_whole.bin");
    const size_t n = save_model(ws, SaveDtype::f64, whole);
    const std::string cut = tmp_path("ddnd_q_cut.bin");
    {
        std::ifstream is(whole, std::ios::binary);
        std::vector<char> buf(n - 5);
        is.read(buf.data(), std::streamsize(buf.size()));
        std::ofstream os(cut, std::ios::binary);
        os.write(buf.data(), std::streamsize(buf.size()));
    }
    REQUIRE_THROWS_WITH(load_model(cut), ContainsSubstring("truncated payload"));

    REQUIRE_THROWS_WITH(load_model(tmp_path("ddnd_q_missing_file.bin")),
                        ContainsSubstring("cannot open"));
    fs::remove(bad);
    fs::remove(whole);
    fs::remove(cut);
}

namespace {

void put_u16(std::ostream& os, uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); }
void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }
void put_u8(std::ostream& os, uint8_t v) { os.write(reinterpret_cast<char*>(&v), 1); }

void put_scalar_entry(std::ostream& os, const std::string& name, uint8_t dtype) {
    put_u16(os, uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    put_u8(os, dtype);
    put_u8(os, 1);   // ndim
    put_u32(os, 1);  // dim
    double v = 0.5;
    os.write(reinterpret_cast<char*>(&v), 8);
}

}  // namespace

TEST_CASE("load_model rejects unknown dtypes and duplicate names", "[quant]") {
    const std::string p1 = tmp_path("ddnd_q_dtype.bin");
    {
        std::ofstream os(p1, std::ios::binary);
        os.write("DDNDW1", 6);
        put_u32(os, 1);
        put_scalar_entry(os, "w", 7);
    }
    REQUIRE_THROWS_WITH(load_model(p1), ContainsSubstring("unknown dtype"));

    const std::string p2 = tmp_path("ddnd_q_dup.bin");
    {
        std::ofstream os(p2, std::ios::binary);
        os.write("DDNDW1", 6);
        put_u32(os, 2);
        put_scalar_entry(os, "w", 1);
        put_scalar_entry(os, "w", 1);
    }
    REQUIRE_THROWS_WITH(load_model(p2), ContainsSubstring("duplicate tensor name"));
    fs::remove(p1);
    fs::remove(p2);
}
