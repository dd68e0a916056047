#include "doctest.h"

#include <sstream>

#include "mpru/errors.hpp"
#include "mpru/params.hpp"

using namespace mpru;

TEST_CASE("defaults reproduce the baseline calibration") {
    ModelParams p;
    CHECK(p.beta == 0.97);
    CHECK(p.gamma == 2.00);
    CHECK(p.nu == 1.00);
    CHECK(p.psi == 1.00);
    CHECK(p.xi == 0.80);
    CHECK(p.A_cap == 1.25);
    CHECK(p.alpha == 0.36);
    CHECK(p.delta == 0.025);
    CHECK(p.rho_Z == 0.90);
    CHECK(p.sigma_eps == 0.08);
    CHECK(p.Z_disaster == -0.15);
    CHECK(p.zeta_low == 0.95);
    CHECK(p.pi_enter == 0.005);
    CHECK(p.pi_exit == 0.34);
    CHECK(p.lambda_weight == 0.01);
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("round trip through the key-value format") {
    ModelParams p;
    p.gamma = 3.5;
    p.ce_n_K = 9;
    p.seed = 42;
    std::stringstream ss;
    p.to_stream(ss);
    const ModelParams q = ModelParams::from_stream(ss, "mem");
    CHECK(q.gamma == 3.5);
    CHECK(q.ce_n_K == 9);
    CHECK(q.seed == 42);
    CHECK(q.hash() == p.hash());
}

TEST_CASE("missing keys take defaults, comments and blanks are ignored") {
    std::stringstream ss("# comment\n\n gamma = 4.0  # inline\n");
    const ModelParams p = ModelParams::from_stream(ss, "mem");
    CHECK(p.gamma == 4.0);
    CHECK(p.beta == 0.97);
}

TEST_CASE("unknown keys are an error with a line number") {
    std::stringstream ss("beta = 0.97\nnot_a_key = 3\n");
    try {
        ModelParams::from_stream(ss, "mem");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("mem:2") != std::string::npos);
        CHECK(msg.find("not_a_key") != std::string::npos);
    }
}

TEST_CASE("malformed values are line-tagged errors") {
    std::stringstream s1("beta == 0.9\n");
    CHECK_THROWS_AS(ModelParams::from_stream(s1, "mem"), ConfigError);
    std::stringstream s2("beta = zebra\n");
    CHECK_THROWS_AS(ModelParams::from_stream(s2, "mem"), ConfigError);
    std::stringstream s3("beta\n");
    CHECK_THROWS_AS(ModelParams::from_stream(s3, "mem"), ConfigError);
}

TEST_CASE("invariant violations are rejected") {
    auto expect_bad = [](auto&& mut) {
        ModelParams p;
        mut(p);
        CHECK_THROWS_AS(p.validate(), ConfigError);
    };
    expect_bad([](ModelParams& p) { p.beta = 1.0; });
    expect_bad([](ModelParams& p) { p.gamma = 0.0; });
    expect_bad([](ModelParams& p) { p.xi = 1.5; });
    expect_bad([](ModelParams& p) { p.delta = -0.1; });
    expect_bad([](ModelParams& p) { p.rho_Z = 1.0; });
    expect_bad([](ModelParams& p) { p.sigma_eps = -1e-9; });
    expect_bad([](ModelParams& p) { p.zeta_low = 0.0; });
    expect_bad([](ModelParams& p) { p.pi_enter = 1.2; });
    expect_bad([](ModelParams& p) { p.lambda_weight = 0.0; });
    expect_bad([](ModelParams& p) { p.n_z = 1; });
}

TEST_CASE("hash changes with any parameter") {
    ModelParams a, b;
    b.sigma_eps = 0.081;
    CHECK(a.hash() != b.hash());
}
