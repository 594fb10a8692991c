#include <doctest.h>

#include <sstream>

#include "fedquad/checkpoint.hpp"
#include "fedquad/config.hpp"
#include "fedquad/error.hpp"
#include "fedquad/io.hpp"
#include "fedquad/metrics.hpp"
#include "fedquad/runner.hpp"
#include "support.hpp"

using namespace fedquad;
namespace fs = std::filesystem;

namespace {

std::string small_blobs(const fs::path& out, const std::string& extra = "") {
  return "[dataset]\nnum_classes = 4\nper_class = 40\ntest_per_class = 25\ndim = 6\nspread = 0.3\n"
         "[model]\nhidden_dims = 16\nembedding_dim = 8\n"
         "[federation]\nnum_clients = 3\nrounds = 3\nlocal_epochs = 1\nbatch_size = 32\n"
         "[output]\ndir = " +
         out.string() + "\n" + extra;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("run writes the artifact set") {
  test::TempDir dir("run");
  const auto cfg = parse_config_text(small_blobs(dir / "a", "[method]\nname = fedavg\n[output]\nexport_rounds = 0, 3\n"));
  std::ostringstream console;
  const auto summary = run_experiment(cfg, &console);
  const std::string csv = read_file(dir / "a/rounds.csv");
  CHECK(count_lines(csv) == 4);
  CHECK(csv.rfind(rounds_csv_header(), 0) == 0);
  CHECK(count_lines(console.str()) == 3);
  CHECK(console.str().find("round 3/3") != std::string::npos);
  CHECK(fs::exists(dir / "a/embeddings_round0.csv"));
  CHECK(fs::exists(dir / "a/embeddings_round3.csv"));
  CHECK_FALSE(fs::exists(dir / "a/embeddings_round1.csv"));
  CHECK(bitwise_equal(load_checkpoint(dir / "a/final.fqck"), summary.result.final_params));
  for (const auto& e : fs::directory_iterator(dir / "a")) CHECK(e.path().extension() != ".tmp");

  const auto table = read_embeddings_csv(dir / "a/embeddings_round3.csv");
  CHECK(table.labels.size() == 100);
  const auto report = variance_report(table.embeddings, table.labels);
  CHECK(std::abs(report.ratio - summary.result.history.back().variance.ratio) < 1e-9 * report.ratio);

  const std::string manifest = read_file(dir / "a/manifest.ini");
  CHECK(manifest.find("# derived seed partition = ") != std::string::npos);
  CHECK(manifest.find("kernels = " + std::string(kernels::backend_name(summary.backend))) != std::string::npos);
}

TEST_CASE("runs are byte-identical and reproducible from the manifest") {
  test::TempDir dir("rerun");
  const auto cfg = parse_config_text(small_blobs(dir / "a"));
  run_experiment(cfg);
  ExperimentConfig again = cfg;
  again.output.dir = (dir / "b").string();
  again.workers = 3;
  finalize(again);
  run_experiment(again);
  CHECK(read_file(dir / "a/rounds.csv") == read_file(dir / "b/rounds.csv"));
  CHECK(read_file(dir / "a/final.fqck") == read_file(dir / "b/final.fqck"));

  ExperimentConfig from_manifest = parse_config(dir / "a/manifest.ini");
  from_manifest.output.dir = (dir / "c").string();
  run_experiment(from_manifest);
  CHECK(read_file(dir / "a/rounds.csv") == read_file(dir / "c/rounds.csv"));
  CHECK(read_file(dir / "a/final.fqck") == read_file(dir / "c/final.fqck"));

  ExperimentConfig other = cfg;
  other.seed = 1;
  other.output.dir = (dir / "d").string();
  finalize(other);
  run_experiment(other);
  CHECK(read_file(dir / "a/final.fqck") != read_file(dir / "d/final.fqck"));
}

TEST_CASE("centralized training reaches high accuracy on well separated blobs") {
  test::TempDir dir("central");
  const auto cfg = parse_config_text(
      "[dataset]\nspread = 0.2\n[method]\nname = fedavg\n[federation]\nrounds = 4\nlocal_epochs = 5\n"
      "[output]\ndir = " + (dir / "c").string() + "\n");
  const auto summary = run_centralized_experiment(cfg);
  CHECK(summary.result.history.size() == 4);
  CHECK(summary.result.history.back().eval.accuracy >= 0.95);
  CHECK(count_lines(read_file(dir / "c/rounds.csv")) == 5);
  CHECK(fs::exists(dir / "c/final.fqck"));
}

TEST_CASE("quadruplet loss alone separates the embedding") {
  test::TempDir dir("quadonly");
  const auto cfg = parse_config_text(small_blobs(dir / "q", "[method]\nuse_ce = false\n"));
  const auto summary = run_centralized_experiment(cfg);
  CHECK(summary.result.history.back().variance.ratio > 1.0);
  CHECK(summary.result.history.back().variance.ratio > summary.result.initial.variance.ratio);
}

TEST_CASE("ablation grid") {
  test::TempDir dir("grid");
  SUBCASE("2x2 grid") {
    const auto cfg = parse_config_text(small_blobs(dir / "g", "[grid]\nbeta = 0.5, 1\nm1 = 1\nm2 = 0.5\nuse_ce = true, false\n"));
    const auto cells = run_ablation_grid(cfg);
    CHECK(cells.size() == 4);
    const std::string csv = read_file(dir / "g/grid.csv");
    CHECK(count_lines(csv) == 5);
    CHECK(csv.find("\n0.5,1,0.5,true,") != std::string::npos);
    for (const auto& c : cells) CHECK(c.ok);
  }
  SUBCASE("default axes include the reference cell") {
    const auto cells = grid_cells(default_config().grid);
    CHECK(cells.size() == 24);
    const bool found = std::any_of(cells.begin(), cells.end(), [](const GridCell& c) {
      return c.beta == 0.5 && c.m1 == 1.0 && c.m2 == 0.5 && c.use_ce;
    });
    CHECK(found);
  }
  SUBCASE("failed cells are recorded and the grid continues") {
    const auto cfg = parse_config_text(small_blobs(dir / "f", "[method]\nname = fedavg\n[grid]\nbeta = 0.5\nm1 = 1\nm2 = 0.5\nuse_ce = false, true\n"));
    std::ostringstream console;
    const auto cells = run_ablation_grid(cfg, &console);
    REQUIRE(cells.size() == 2);
    CHECK_FALSE(cells[0].ok);
    CHECK(cells[0].note.find("config") == 0);
    CHECK(cells[1].ok);
    const std::string csv = read_file(dir / "f/grid.csv");
    CHECK(csv.find(",failed,config: ") != std::string::npos);
    CHECK(console.str().find("failed") != std::string::npos);
  }
}

TEST_CASE("grid csv escapes notes") {
  GridCell c;
  c.note = "a,b\nc";
  const std::string csv = grid_csv({c});
  CHECK(csv.find("a;b;c\n") != std::string::npos);
  CHECK(count_lines(csv) == 2);
}

TEST_CASE("inspect-partition and check-data") {
  test::TempDir dir("inspect");
  const auto cfg = parse_config_text(small_blobs(dir / "p", "[partition]\nalpha = 0.3\n"));
  std::ostringstream console;
  const auto hist = inspect_partition(cfg, &console);
  CHECK(hist.size() == 3);
  std::size_t total = 0;
  for (const auto& row : hist) {
    for (auto n : row) total += n;
  }
  CHECK(total == 160);
  CHECK(read_file(dir / "p/partition_histogram.csv") == console.str());
  CHECK(check_data(cfg).find("train=160 test=100") != std::string::npos);

  // An empty CIFAR path without the environment fallback.
  ExperimentConfig cifar = parse_config_text("[dataset]\nkind = cifar10\n");
  if (std::getenv("FEDQUAD_DATA_DIR") == nullptr) CHECK_THROWS_AS(dataset_root(cifar), ConfigError);
  cifar.dataset.path = (dir / "nowhere").string();
  CHECK_THROWS_AS(check_data(cifar), Error);
}

TEST_CASE("unwritable output directory is an io error") {
  test::TempDir dir("unwritable");
  write_file_atomic(dir / "file", "x");
  const auto cfg = parse_config_text(small_blobs(dir / "file/sub"));
  CHECK_THROWS_AS(run_experiment(cfg), IoError);
}
