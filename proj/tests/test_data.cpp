#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "stbr/data.hpp"

using namespace stbr;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path.string();
}

CtsDataset small_dataset() {
  CtsDataset ds;
  ds.instance_ids = {"a", "b"};
  ds.values = Eigen::MatrixXd(2, 6);
  ds.values << 1, 2, 3, 4, 5, 6, 10, 20, 30, 40, 50, 60;
  ds.observed = ByteMatrix::Ones(2, 6);
  return ds;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("load_dataset shape, header ids, missing cells") {
  const std::string path = write_temp("stbr_ds1.csv",
                                      "ts,s1,s2\n"
                                      "0,1.5,2.5\n"
                                      "1,,3.5\n"
                                      "2,2.0,4.5\n");
  const CtsDataset ds = load_dataset(path);
  CHECK(ds.instances() == 2);
  CHECK(ds.timesteps() == 3);
  CHECK(ds.instance_ids[0] == "s1");
  CHECK(ds.instance_ids[1] == "s2");
  CHECK(ds.observed(0, 1) == 0);  // empty cell
  CHECK(ds.values(0, 1) == 0.0);
  CHECK(ds.observed(1, 1) == 1);
  CHECK(ds.values(1, 2) == doctest::Approx(4.5));
  CHECK(ds.time_step == 1);
}

TEST_CASE("load_dataset missing cell at row 5 column 2 maps to observed[1,4]") {
  const std::string path = write_temp("stbr_ds2.csv",
                                      "ts,s1,s2\n"
                                      "0,1,1\n1,1,1\n2,1,1\n3,1,1\n4,1,\n");
  const CtsDataset ds = load_dataset(path);
  CHECK(ds.observed(1, 4) == 0);
  CHECK(ds.observed(0, 4) == 1);
}

TEST_CASE("load_dataset ragged row reports the line number") {
  const std::string path = write_temp("stbr_ds3.csv", "ts,s1,s2\n0,1,2\n1,3\n");
  try {
    load_dataset(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("load_dataset non-numeric cell reports the cell address") {
  const std::string path = write_temp("stbr_ds4.csv", "ts,s1,s2\n0,1,2\n1,oops,4\n");
  try {
    load_dataset(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("s1") != std::string::npos);
  }
}

TEST_CASE("load_dataset handles CRLF") {
  const std::string path = write_temp("stbr_ds5.csv", "ts,s1\r\n0,1\r\n1,2\r\n");
  const CtsDataset ds = load_dataset(path);
  CHECK(ds.timesteps() == 2);
  CHECK(ds.values(0, 1) == 2.0);
}

TEST_CASE("load_adjacency accepts a 2-node graph") {
  const std::string path = write_temp("stbr_adj1.csv", "0,1\n1,0\n");
  const AdjacencyGraph g = load_adjacency(path);
  CHECK(g.weights(0, 1) == 1.0);
  CHECK_FALSE(g.spatially_degenerate);
}

TEST_CASE("load_adjacency rejects negative weights") {
  const std::string path = write_temp("stbr_adj2.csv", "0,-1\n1,0\n");
  CHECK_THROWS_AS(load_adjacency(path), Error);
  try {
    load_adjacency(path);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
  }
}

TEST_CASE("load_adjacency flags an all-zero matrix as spatially degenerate") {
  const std::string path = write_temp("stbr_adj3.csv", "0,0\n0,0\n");
  CHECK(load_adjacency(path).spatially_degenerate);
}

TEST_CASE("load_adjacency dimension mismatch is an alignment error") {
  const std::string path = write_temp("stbr_adj4.csv", "0,1\n1,0\n");
  std::vector<std::string> ids = {"a", "b", "c"};
  try {
    load_adjacency(path, &ids);
    FAIL("expected alignment error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Alignment);
  }
}

TEST_CASE("load_adjacency header ids must match the dataset") {
  const std::string path = write_temp("stbr_adj5.csv", "a,b\n0,1\n1,0\n");
  std::vector<std::string> good = {"a", "b"};
  CHECK(load_adjacency(path, &good).instance_ids == good);
  std::vector<std::string> bad = {"x", "b"};
  CHECK_THROWS_AS(load_adjacency(path, &bad), Error);
}

TEST_CASE("split fractions build chronological boundaries") {
  const SplitSpec split = SplitSpec::from_fractions(100, 0.7, 0.1);
  CHECK(split.train_end == 70);
  CHECK(split.val_end == 80);
  CHECK(split.total == 100);
  CHECK_THROWS_AS(SplitSpec::from_fractions(100, 0.0, 0.1), Error);
  CHECK_THROWS_AS(SplitSpec::from_fractions(100, 0.8, 0.3), Error);
}

TEST_CASE("fit_normalizer hand z-score with population sigma") {
  CtsDataset ds;
  ds.instance_ids = {"a"};
  ds.values = Eigen::MatrixXd(1, 3);
  ds.values << 1, 2, 3;
  ds.observed = ByteMatrix::Ones(1, 3);
  const SplitSpec split{3, 3, 3};
  const NormStats stats = fit_normalizer(ds, split);
  CHECK(stats.mean(0) == doctest::Approx(2.0));
  CHECK(stats.stddev(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  const CtsDataset norm = stats.apply(ds);
  CHECK(norm.values(0, 0) == doctest::Approx(-1.224744871391589));
  CHECK(norm.values(0, 1) == doctest::Approx(0.0));
  CHECK(norm.values(0, 2) == doctest::Approx(1.224744871391589));
}

TEST_CASE("fit_normalizer constant series guard") {
  CtsDataset ds;
  ds.instance_ids = {"c"};
  ds.values = Eigen::MatrixXd(1, 3);
  ds.values << 5, 5, 5;
  ds.observed = ByteMatrix::Ones(1, 3);
  const NormStats stats = fit_normalizer(ds, {3, 3, 3});
  CHECK(stats.stddev(0) == 1.0);
  CHECK(stats.constant_series[0] == 1);
  const CtsDataset norm = stats.apply(ds);
  CHECK(norm.values(0, 0) == 0.0);
  CHECK(norm.values(0, 2) == 0.0);
}

TEST_CASE("normalize round trip within 1e-9") {
  CtsDataset ds = small_dataset();
  const NormStats stats = fit_normalizer(ds, {4, 5, 6});
  const CtsDataset back = stats.invert(stats.apply(ds));
  for (int i = 0; i < 2; ++i)
    for (int t = 0; t < 6; ++t) CHECK(std::abs(back.values(i, t) - ds.values(i, t)) < 1e-9);
}

TEST_CASE("fit_normalizer requires observed training points") {
  CtsDataset ds = small_dataset();
  ds.observed.row(0).head(4).setZero();  // instance a: nothing observed in train
  try {
    fit_normalizer(ds, {4, 5, 6});
    FAIL("expected coverage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Coverage);
  }
  // the lenient variant widens the window instead
  const NormStats stats = fit_normalizer_lenient(ds, {4, 5, 6});
  CHECK(stats.stddev(0) > 0.0);
}

TEST_CASE("normalizer statistics ignore everything outside the training split") {
  CtsDataset ds = small_dataset();
  const NormStats before = fit_normalizer(ds, {4, 5, 6});
  ds.values(0, 5) = 1e9;   // test region perturbation
  ds.values(1, 4) = -1e9;  // validation region perturbation
  const NormStats after = fit_normalizer(ds, {4, 5, 6});
  CHECK(before.mean(0) == after.mean(0));
  CHECK(before.stddev(0) == after.stddev(0));
  CHECK(before.mean(1) == after.mean(1));
  CHECK(before.stddev(1) == after.stddev(1));
}

TEST_CASE("inject_missing rate 0 changes nothing") {
  const CtsDataset ds = small_dataset();
  const CtsDataset out = inject_missing(ds, 0.0, 42);
  CHECK((out.observed.array() == ds.observed.array()).all());
}

TEST_CASE("inject_missing flips the exact count") {
  CtsDataset ds;
  ds.instance_ids = {"a", "b"};
  ds.values = Eigen::MatrixXd::Zero(2, 50);
  ds.observed = ByteMatrix::Ones(2, 50);  // 100 observed points
  const CtsDataset out = inject_missing(ds, 0.5, 7);
  CHECK(ds.observed_count() - out.observed_count() == 50);
}

TEST_CASE("inject_missing is deterministic and monotone in rate") {
  CtsDataset ds;
  ds.instance_ids = {"a", "b", "c"};
  ds.values = Eigen::MatrixXd::Zero(3, 40);
  ds.observed = ByteMatrix::Ones(3, 40);

  const CtsDataset a1 = inject_missing(ds, 0.2, 9);
  const CtsDataset a2 = inject_missing(ds, 0.2, 9);
  CHECK((a1.observed.array() == a2.observed.array()).all());

  const CtsDataset b = inject_missing(ds, 0.4, 9);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 40; ++t)
      if (!a1.observed(i, t)) CHECK_FALSE(b.observed(i, t));  // subset property
}

TEST_CASE("inject_missing rejects rate outside [0,1)") {
  const CtsDataset ds = small_dataset();
  CHECK_THROWS_AS(inject_missing(ds, 1.0, 1), Error);
  CHECK_THROWS_AS(inject_missing(ds, -0.1, 1), Error);
}

TEST_CASE("dataset save/load round trip preserves values and masks") {
  CtsDataset ds = small_dataset();
  ds.observed(0, 2) = 0;
  ds.values(0, 2) = 0.0;
  ds.values(1, 3) = 40.125;
  const auto path = std::filesystem::temp_directory_path() / "stbr_roundtrip.csv";
  save_dataset(ds, path.string());
  const CtsDataset back = load_dataset(path.string());
  CHECK(back.instance_ids == ds.instance_ids);
  CHECK((back.observed.array() == ds.observed.array()).all());
  for (int i = 0; i < 2; ++i)
    for (int t = 0; t < 6; ++t)
      if (ds.observed(i, t)) CHECK(back.values(i, t) == ds.values(i, t));  // bit-exact
}

TEST_CASE("subset_instances keeps order and alignment") {
  const CtsDataset ds = small_dataset();
  const CtsDataset sub = subset_instances(ds, {"b"});
  CHECK(sub.instances() == 1);
  CHECK(sub.values(0, 0) == 10.0);
  CHECK_THROWS_AS(subset_instances(ds, {"zz"}), Error);

  AdjacencyGraph g;
  g.instance_ids = {"a", "b", "c"};
  g.weights = Eigen::MatrixXd::Zero(3, 3);
  g.weights(0, 1) = 2.0;
  g.weights(1, 0) = 2.0;
  g.weights(1, 2) = 3.0;
  g.weights(2, 1) = 3.0;
  const AdjacencyGraph sg = subset_instances(g, {"a", "b"});
  CHECK(sg.weights(0, 1) == 2.0);
  CHECK_FALSE(sg.spatially_degenerate);
  const AdjacencyGraph isolated = subset_instances(g, {"a", "c"});
  CHECK(isolated.spatially_degenerate);
}

TEST_SUITE_END();
