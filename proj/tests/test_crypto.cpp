#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "helia/crypto.hpp"
#include "test_util.hpp"

using namespace helia;
using namespace helia::crypto;
using test::fixed_from_hex;

namespace {

SecretKey counting_key() {
    SecretKey k;
    for (std::size_t i = 0; i < 16; ++i) k.bytes[i] = static_cast<std::uint8_t>(i);
    return k;
}

}  // namespace

TEST_CASE("frozen vectors") {
    std::ifstream in(test::data_path("vectors/crypto_vectors.txt"));
    REQUIRE(in);
    std::size_t checked = 0;
    for (std::string line; std::getline(in, line);) {
        std::istringstream is(line);
        std::string kind;
        is >> kind;
        std::vector<std::string> f;
        for (std::string w; is >> w;) f.push_back(w);
        auto u = [](const std::string& s) { return static_cast<std::uint64_t>(std::stoull(s)); };
        CAPTURE(line);
        if (kind == "drkey") {
            CHECK(to_hex(derive_drkey(fixed_from_hex<SecretKey>(f[0]), u(f[1])).bytes) == f[2]);
        } else if (kind == "auth") {
            const auto a = compute_authenticator(fixed_from_hex<SecretKey>(f[0]), u(f[1]), static_cast<IfId>(u(f[2])),
                                                 static_cast<IfId>(u(f[3])));
            CHECK(to_hex(a.bytes) == f[4]);
        } else if (kind == "vf") {
            const auto auth = fixed_from_hex<Authenticator>(f[0]);
            const auto len = static_cast<std::uint16_t>(u(f[2]));
            CHECK(to_hex(compute_validation_mac(auth, u(f[1]), len).bytes) == f[3]);
            CHECK(to_hex(compute_validation_field(auth, u(f[1]), len).bytes) == f[3].substr(0, 6));
        } else if (kind == "setupauth") {
            CHECK(to_hex(compute_setup_auth(fixed_from_hex<DrKey>(f[0]), u(f[1]), f[2] == "1", f[3] == "1").bytes) == f[4]);
        } else if (kind == "setupauth2") {
            const auto m = compute_setup_auth(fixed_from_hex<DrKey>(f[0]), u(f[1]), f[2] == "1", f[3] == "1",
                                              SetupDemand{u(f[4]), u(f[5])});
            CHECK(to_hex(m.bytes) == f[6]);
        } else if (kind == "seal") {
            const auto dk = fixed_from_hex<DrKey>(f[0]);
            const auto auth = fixed_from_hex<Authenticator>(f[1]);
            const auto nonce = fixed_from_hex<Nonce>(f[4]);
            const auto s = seal_grant(dk, auth, u(f[2]), u(f[3]), nonce);
            CHECK(to_hex(s.ciphertext) == f[5]);
            CHECK(to_hex(s.tag.bytes) == f[6]);
            CHECK(unseal_grant(dk, s, u(f[2]), u(f[3]), nonce) == auth);
        } else {
            FAIL("unknown vector kind " << kind);
        }
        ++checked;
    }
    CHECK(checked == 147);
}

TEST_CASE("drkey") {
    const auto k = counting_key();
    CHECK(derive_drkey(k, 42) == derive_drkey(k, 42));
    CHECK_FALSE(derive_drkey(k, 42) == derive_drkey(k, 43));
    CHECK(to_hex(derive_drkey(k, 42).bytes) == "3cb6b7a83e7b5a8e6e8c2a3d88f3f71a");
}

TEST_CASE("authenticator") {
    const auto k = counting_key();
    CHECK(compute_authenticator(k, 7, 1, 2) == compute_authenticator(k, 7, 1, 2));
    CHECK_FALSE(compute_authenticator(k, 7, 1, 2) == compute_authenticator(k, 7, 2, 1));
    CHECK(to_hex(compute_authenticator(k, 7, 1, 2).bytes) == "933f139364a54b9e554559f1b1727133");
}

TEST_CASE("validation field") {
    Authenticator a;
    for (std::size_t i = 0; i < 16; ++i) a.bytes[i] = static_cast<std::uint8_t>(i);
    const TimeNs ts = 1'000'000'000'000'000'000ULL;
    CHECK(compute_validation_field(a, ts, 1040) == compute_validation_field(a, ts, 1040));
    CHECK_FALSE(compute_validation_field(a, ts, 1040) == compute_validation_field(a, ts, 1041));
    CHECK(to_hex(compute_validation_field(a, ts, 1040).bytes) == "9365ca");
    CHECK(kValidationFieldLen == 3);
}

TEST_CASE("purity and truncation over random inputs") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 500; ++i) {
        const auto k = test::random_fixed<SecretKey>(rng);
        const AsId as = rng();
        const auto in = static_cast<IfId>(rng()), eg = static_cast<IfId>(rng());
        CHECK(derive_drkey(k, as) == derive_drkey(k, as));
        const auto a = compute_authenticator(k, as, in, eg);
        CHECK(a == compute_authenticator(k, as, in, eg));
        const TimeNs ts = rng();
        const auto len = static_cast<std::uint16_t>(rng());
        const auto full = compute_validation_mac(a, ts, len);
        const auto vf = compute_validation_field(a, ts, len);
        CHECK(std::equal(vf.bytes.begin(), vf.bytes.end(), full.bytes.begin()));
    }
}

TEST_CASE("seal roundtrip and single-bit corruption") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
        const auto dk = test::random_fixed<DrKey>(rng);
        const auto auth = test::random_fixed<Authenticator>(rng);
        const auto nonce = test::random_fixed<Nonce>(rng);
        const Bps bw = rng();
        const TimeNs exp = rng();
        const auto s = seal_grant(dk, auth, bw, exp, nonce);
        REQUIRE(unseal_grant(dk, s, bw, exp, nonce) == auth);

        const auto bit = rng() % 256;
        auto c = s;
        if (bit < 128) c.ciphertext[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        else c.tag.bytes[(bit - 128) / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        CHECK_FALSE(unseal_grant(dk, c, bw, exp, nonce).has_value());
        CHECK_FALSE(unseal_grant(dk, s, bw ^ (Bps{1} << (rng() % 64)), exp, nonce).has_value());
        CHECK_FALSE(unseal_grant(dk, s, bw, exp ^ (TimeNs{1} << (rng() % 64)), nonce).has_value());
    }
}

TEST_CASE("authenticator does not depend on grant size or expiry") {
    const auto k = counting_key();
    const auto dk = derive_drkey(k, 9);
    const auto a = compute_authenticator(k, 9, 3, 4);
    Nonce n1{}, n2{};
    n2.bytes[0] = 1;
    const auto s1 = seal_grant(dk, a, 1000, 10, n1);
    const auto s2 = seal_grant(dk, a, 5000, 99, n2);
    CHECK(unseal_grant(dk, s1, 1000, 10, n1) == unseal_grant(dk, s2, 5000, 99, n2));
}

TEST_CASE("op counters") {
    reset_op_counters();
    const auto k = counting_key();
    (void)compute_authenticator(k, 1, 2, 3);
    (void)compute_setup_auth(derive_drkey(k, 1), 5, true, false, SetupDemand{1, 2});
    CHECK(op_counters().mac == 3);
    (void)seal_grant(derive_drkey(k, 1), Authenticator{}, 1, 1, Nonce{});
    CHECK(op_counters().aead == 1);
}

TEST_CASE("random nonces differ") {
    CHECK_FALSE(random_nonce() == random_nonce());
}

TEST_CASE("constant-time compare") {
    const std::uint8_t a[3] = {1, 2, 3}, b[3] = {1, 2, 4};
    CHECK(equal_ct(a, a));
    CHECK_FALSE(equal_ct(a, b));
    CHECK_FALSE(equal_ct(std::span<const std::uint8_t>(a, 2), a));
}
