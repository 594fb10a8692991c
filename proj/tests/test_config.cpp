#include <doctest.h>

#include <string>

#include "fedquad/config.hpp"
#include "fedquad/error.hpp"
#include "fedquad/io.hpp"
#include "support.hpp"

using namespace fedquad;

TEST_CASE("empty config gives the defaults") {
  const ExperimentConfig c = parse_config_text("");
  CHECK(c.dataset.kind == DatasetKind::kBlobs);
  CHECK(c.model.kind == ModelKind::kMlp);
  CHECK(c.fed.batch_size == 128);
  CHECK(c.fed.local_epochs == 5);
  CHECK(c.fed.rounds == 20);
  CHECK(c.fed.adam.lr == 0.001);
  CHECK(c.fed.adam.weight_decay == 1e-5);
  CHECK(c.fed.objective.method == Method::kFedQuad);
  CHECK(c.fed.objective.quad.beta == 0.5);
  CHECK(c.fed.objective.quad.m1 == 1.0);
  CHECK(c.fed.objective.quad.m2 == 0.5);
  CHECK(c.fed.objective.quad.squared_distance);
  CHECK(c.fed.objective.use_ce);
  CHECK(c.model.embedding_dim == 128);
  CHECK(c.fed.participation == 1.0);
  CHECK(c.kernels == "auto");
  CHECK(parse_config_text("# only a comment\n\n; another\n") == c);
}

TEST_CASE("config values are parsed into their fields") {
  const ExperimentConfig c = parse_config_text(R"(
[experiment]
seed = 42
workers = 3

[dataset]
kind = blobs
num_classes = 6
per_class = 20
dim = 4
spread = 0.25

[partition]
scheme = iid

[model]
hidden_dims = 32, 16
embedding_dim = 8

[federation]
num_clients = 4
rounds = 2
local_epochs = 1
batch_size = 10
participation = 0.5

[method]
name = tripletfl
margin = 0.7
squared_distance = false
use_ce = false

[optimizer]
lr = 0.01

[output]
dir = out/x
export_rounds = 0, 2

[grid]
beta = 0.5
use_ce = true
)");
  CHECK(c.seed == 42);
  CHECK(c.fed.seed == 42);
  CHECK(c.fed.workers == 3);
  CHECK(c.dataset.blobs.num_classes == 6);
  CHECK(c.dataset.blobs.spread == 0.25);
  CHECK(c.partition.scheme == PartitionScheme::kIid);
  CHECK(c.model.hidden_dims == std::vector<std::size_t>{32, 16});
  CHECK(c.fed.num_clients == 4);
  CHECK(c.fed.participation == 0.5);
  CHECK(c.fed.objective.method == Method::kTripletFL);
  CHECK(c.fed.objective.margin == 0.7);
  CHECK_FALSE(c.fed.objective.quad.squared_distance);
  CHECK_FALSE(c.fed.objective.use_ce);
  CHECK(c.fed.adam.lr == 0.01);
  CHECK(c.output.dir == "out/x");
  CHECK(c.output.export_rounds == std::vector<std::size_t>{0, 2});
  CHECK(c.grid.beta == std::vector<double>{0.5});
  CHECK(c.grid.use_ce == std::vector<bool>{true});
}

TEST_CASE("config errors name the line and key") {
  auto fails = [](const std::string& text, const std::string& needle) {
    CHECK_THROWS_WITH_AS(parse_config_text(text, "exp.ini"), doctest::Contains(needle.c_str()), ConfigError);
  };
  fails("[partition]\nalpha = 0\n", "alpha must be > 0");
  fails("[partition]\nalpha = 0\n", "exp.ini:2: partition.alpha");
  fails("[federation]\nrounds = 3\nbogus = 1\n", "exp.ini:3: unknown key federation.bogus");
  fails("[nope]\n", "exp.ini:1: unknown section [nope]");
  fails("[method]\nbeta = 1\nbeta = 2\n", "exp.ini:3: duplicate key method.beta");
  fails("seed = 1\n", "exp.ini:1: key 'seed' outside any section");
  fails("[method\n", "malformed section header");
  fails("[method]\njust words\n", "expected 'key = value'");
  fails("[method]\nbeta = -1\n", "method.beta");
  fails("[method]\nbeta = abc\n", "expected a number");
  fails("[method]\nname = fedprox\n", "unknown method");
  fails("[method]\nuse_ce = maybe\n", "expected true or false");
  fails("[federation]\nparticipation = 0\n", "federation.participation");
  fails("[federation]\nbatch_size = 0\n", "federation.batch_size");
  fails("[federation]\nrounds = 2\n[output]\nexport_rounds = 3\n", "output.export_rounds");
  fails("[model]\nkind = cnn\n", "model.kind");
  fails("[dataset]\nkind = cifar10\n[model]\nkind = mlp\n", "model.kind");
  fails("[experiment]\nkernels = sse9\n", "experiment.kernels");
  fails("[optimizer]\nbeta1 = 1\n", "optimizer.beta1");
  fails("[model]\nhidden_dims = 4,,4\n", "model.hidden_dims");
  fails("[dataset]\nnorm_mean = 0.5, 0.5\n", "dataset.norm_mean");
  fails("[grid]\nbeta =\n", "grid");

  CHECK_THROWS_AS(parse_config(std::filesystem::path("/nonexistent/fedquad.ini")), ConfigError);
}

TEST_CASE("serialize then parse reproduces the configuration") {
  const char* texts[] = {
      "",
      "[experiment]\nseed = 18446744073709551615\n[method]\nbeta = 0.1\nm1 = 2\nm2 = 1e-3\n",
      "[dataset]\nkind = cifar100\npath = /data/c100\nnorm_mean = 0.5, 0.4, 0.3\nnorm_std = 0.2, 0.2, 0.25\n",
      "[partition]\nscheme = iid\n[model]\nhidden_dims =\n[output]\nexport_rounds = 0, 5, 20\n",
      "[grid]\nbeta = 0, 0.25\nuse_ce = false\n[method]\nname = supconfl\ntemperature = 0.07\n",
  };
  for (const char* t : texts) {
    const ExperimentConfig a = parse_config_text(t);
    const std::string s = serialize_config(a);
    const ExperimentConfig b = parse_config_text(s);
    CHECK(a == b);
    CHECK(serialize_config(b) == s);
  }
  const ExperimentConfig cifar = parse_config_text(texts[2]);
  CHECK(cifar.model.kind == ModelKind::kCnn);
  REQUIRE(cifar.dataset.norm.has_value());
  CHECK(cifar.dataset.norm->stddev[2] == 0.25);

  test::TempDir dir("cfg");
  write_file_atomic(dir / "c.ini", serialize_config(parse_config_text(texts[1])));
  CHECK(parse_config(dir / "c.ini") == parse_config_text(texts[1]));
}

TEST_CASE("model spec follows the dataset") {
  ExperimentConfig c = parse_config_text("[model]\nhidden_dims = 9\nembedding_dim = 5\n");
  Dataset d = make_blobs(3, 4, 7, 0.1, 1);
  const ModelSpec s = model_spec(c, d);
  CHECK(s.kind == ModelKind::kMlp);
  CHECK(s.input_shape == Shape{7});
  CHECK(s.num_classes == 3);
  CHECK(s.hidden_dims == std::vector<std::size_t>{9});
  CHECK(s.embedding_dim == 5);
}
