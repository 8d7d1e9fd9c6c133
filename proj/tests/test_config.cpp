#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "polymetro/config.hpp"

using namespace polymetro;

namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(text, "doc.json");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    return e.what();
  }
  ADD_FAILURE() << "no error for: " << text;
  return "";
}

const char* kMinimal = R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"}})";

}  // namespace

TEST(Config, MinimalDocumentUsesDefaults) {
  ExperimentConfig c = parse_config(kMinimal);
  EXPECT_EQ(c.polytope.dim(), 2);
  EXPECT_EQ(c.polytope.num_facets(), 4);
  EXPECT_TRUE(c.family.is_discrete());
  EXPECT_EQ(c.seed, 0u);
  EXPECT_DOUBLE_EQ(c.chain.h, 0.1);
  EXPECT_EQ(c.spectral.h, std::vector<double>{0.2});
  EXPECT_EQ(c.diagnostics.checkpoints, (std::vector<std::size_t>{10, 30, 90}));
  EXPECT_EQ(c.output_dir, "out");
}

TEST(Config, Builtins) {
  auto tri = parse_config(R"({"polytope": {"builtin": "triangle"}, "family": {"type": "angles", "degrees": [0, 30]}})");
  EXPECT_EQ(tri.polytope.num_facets(), 3);
  EXPECT_NEAR(tri.family.checking_vectors()[1](1), 0.5, 1e-15);

  auto cube = parse_config(R"({"polytope": {"builtin": "cube", "dim": 3}, "family": {"type": "canonical"}})");
  EXPECT_EQ(cube.polytope.dim(), 3);

  auto b = parse_config(R"({"polytope": {"builtin": "birkhoff", "n": 3}, "family": {"type": "birkhoff"}})");
  ASSERT_TRUE(b.birkhoff);
  EXPECT_EQ(b.polytope.dim(), 4);
  EXPECT_EQ(b.family.checking_vectors().size(), 9u);
  EXPECT_TRUE(b.polytope.contains(b.default_start()));
}

TEST(Config, ExplicitPolytopeWithEmbedding) {
  auto c = parse_config(R"({
    "polytope": {"forms": [[1, 0], [0, 1], [-1, -1]], "offsets": [0, 0, -1],
                 "embedding": {"linear": [[1, 0], [0, 1], [-1, -1]], "offset": [0, 0, 1]}},
    "family": {"type": "explicit", "vectors": [[1, 0], [1, -1]]}
  })");
  EXPECT_EQ(c.polytope.num_facets(), 3);
  Vector x(2);
  x << 0.2, 0.3;
  EXPECT_NEAR(c.polytope.to_ambient(x)(2), 0.5, 1e-15);
  EXPECT_EQ(c.polytope_kind, "explicit");
}

TEST(Config, SphereFamily) {
  auto c = parse_config(R"({"polytope": {"builtin": "square"},
                            "family": {"type": "sphere", "density": "cos2", "kappa": 0.5, "quadrature": 32}})");
  EXPECT_FALSE(c.family.is_discrete());
  EXPECT_EQ(c.family.as_continuous().quadrature_nodes, 32);
  EXPECT_EQ(c.family.checking_vectors().size(), 2u);
}

TEST(Config, SyntaxErrorsCarryLineAndColumn) {
  std::string msg = message_of("{\n  \"polytope\": {\"builtin\": \"square\"},\n  \"family\": {\"type\": \"canonical\",}\n}\n");
  EXPECT_NE(msg.find("line 3, column 34"), std::string::npos) << msg;
  EXPECT_NE(msg.find("doc.json:3:34"), std::string::npos) << msg;
  msg = message_of("{\"polytope\": ");
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
}

TEST(Config, UnknownKeysAreFatal) {
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"}, "chian": {}})")
                .find("'chian' is not a recognized key"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"},
                          "chain": {"h": 0.1, "step": 5}})")
                .find("'chain.step'"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square", "n": 3}, "family": {"type": "canonical"}})")
                .find("'polytope.n'"),
            std::string::npos);
}

TEST(Config, TypeAndValueErrors) {
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"}, "seed": -1})")
                .find("non-negative"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"},
                          "chain": {"steps": 1.5}})")
                .find("must be an integer"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"},
                          "chain": {"start": [0.5]}})")
                .find("2 coordinates"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "birkhoff"}})").find("birkhoff"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "hexagon"}, "family": {"type": "canonical"}})")
                .find("must be one of"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"family": {"type": "canonical"}})").find("'polytope' is required"), std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"forms": [[1, 0], [0]], "offsets": [0, 0]}, "family": {"type": "canonical"}})")
                .find("different lengths"),
            std::string::npos);
  EXPECT_NE(message_of(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"},
                          "diagnostics": {"mode": "fast"}})")
                .find("diagnostics.mode"),
            std::string::npos);
}

TEST(Config, GeometryErrorsPropagateWithTheirCode) {
  try {
    parse_config(R"({"polytope": {"forms": [[1, 0]], "offsets": [0]}, "family": {"type": "canonical"}})");
    FAIL() << "unbounded polytope accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unbounded);
  }
}

TEST(Config, HashIgnoresFormattingAndKeyOrder) {
  auto a = parse_config(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"}, "seed": 4})");
  auto b = parse_config("{\n \"seed\": 4,\n \"family\": {\"type\": \"canonical\"},\n \"polytope\": {\"builtin\": \"square\"}\n}");
  auto c = parse_config(R"({"polytope": {"builtin": "square"}, "family": {"type": "canonical"}, "seed": 5})");
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(a.hash, c.hash);
  EXPECT_EQ(hex64(a.hash).size(), 16u);
}

TEST(Config, MissingFileIsAnIOError) {
  try {
    load_config("/nonexistent/polymetro.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IO);
  }
}
