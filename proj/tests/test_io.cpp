#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "ala/errors.hpp"
#include "ala/io.hpp"
#include "support.hpp"

using namespace ala;
using namespace ala::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ala_io_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    const fs::path f = path / name;
    std::ofstream(f) << text;
    return f.string();
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static inline int counter = 0;
};

std::string ErrorOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const AlaError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("three singleton columns") {
  TempDir dir;
  const auto data = dir.write("d.csv", "y,a,b,c\n1,0.5,1,2\n0,1.5,0,1\n1,2,1,0\n0,3,2,1\n");
  const auto groups = dir.write("g.csv", "column,group\na,1\nb,2\nc,3\n");
  IngestOptions opts;
  opts.add_intercept = false;
  const Dataset d = ingest(data, groups, std::nullopt, opts);
  CHECK(d.design->J() == 3);
  CHECK(d.design->p() == 3);
  CHECK(d.y.size() == 4);
  CHECK(d.group_ids == std::vector<long>{1, 2, 3});

  const Dataset with = ingest(data, groups, std::nullopt);
  CHECK(with.design->J() == 4);
  CHECK(with.design->intercept_group() == 0);
  CHECK(with.group_ids.front() == -1);
}

TEST_CASE("indicator columns sharing a group") {
  TempDir dir;
  const auto data = dir.write("d.csv", "y,x,lvl2,lvl3\n1,0.1,1,0\n2,0.2,0,1\n3,0.3,0,0\n4,0.4,1,0\n");
  const auto groups = dir.write("g.csv", "lvl2,7\nx,3\nlvl3,7\n");  // no header, unsorted ids
  const Dataset d = ingest(data, groups, std::nullopt);
  REQUIRE(d.design->J() == 3);
  CHECK(d.design->layout().size(1) == 1);
  CHECK(d.design->layout().size(2) == 2);
  CHECK(d.design->column_names()[2] == "lvl2");
  CHECK(d.design->column_names()[3] == "lvl3");
}

TEST_CASE("constraint files") {
  TempDir dir;
  const auto data = dir.write("d.csv", "y,a,b,c\n1,1,2,3\n2,2,1,3\n3,3,3,1\n");
  const auto groups = dir.write("g.csv", "column,group\na,10\nb,20\nc,30\n");
  SUBCASE("dependencies map to design groups") {
    const auto cons = dir.write("c.csv", "child_group,parent_group\n20,10\n30,20\n");
    const Dataset d = ingest(data, groups, cons);
    CHECK(d.constraints.parents(2) == std::vector<int>{1});
    CHECK(d.constraints.parents(3) == std::vector<int>{2});
    CHECK(d.constraints.forced_group() == 0);
  }
  SUBCASE("a cycle is reported with user ids") {
    const auto cons = dir.write("c.csv", "child_group,parent_group\n20,10\n10,20\n");
    const std::string msg = ErrorOf([&] { ingest(data, groups, cons); });
    CHECK(msg.find("cycle") != std::string::npos);
    const std::string tail = msg.substr(msg.find("cycle ") + 6);
    CHECK((tail == "10 -> 20 -> 10" || tail == "20 -> 10 -> 20"));
  }
  SUBCASE("unknown group") {
    const auto cons = dir.write("c.csv", "20,99\n");
    CHECK_THROWS_AS(ingest(data, groups, cons), ParseError);
  }
}

TEST_CASE("malformed input names the line") {
  TempDir dir;
  const auto groups = dir.write("g.csv", "a,1\n");
  SUBCASE("non-numeric cell") {
    const auto data = dir.write("d.csv", "y,a\n1,2\n3,abc\n");
    const std::string msg = ErrorOf([&] { ingest(data, groups, std::nullopt); });
    CHECK(msg.find("d.csv:3") != std::string::npos);
    CHECK(msg.find("abc") != std::string::npos);
  }
  SUBCASE("ragged row") {
    const auto data = dir.write("d.csv", "y,a\n1,2\n3\n");
    CHECK(ErrorOf([&] { ingest(data, groups, std::nullopt); }).find("d.csv:3") !=
          std::string::npos);
  }
  SUBCASE("columns without a group are ignored") {
    const auto data = dir.write("d.csv", "y,a,b\n1,2,3\n4,5,7\n");
    CHECK(ingest(data, groups, std::nullopt).design->p() == 2);
  }
  SUBCASE("grouped column missing from the data") {
    const auto data = dir.write("d.csv", "y,b\n1,3\n");
    CHECK_THROWS_AS(ingest(data, groups, std::nullopt), ParseError);
  }
  SUBCASE("missing response") {
    const auto data = dir.write("d.csv", "z,a\n1,2\n");
    CHECK_THROWS_AS(ingest(data, groups, std::nullopt), ParseError);
  }
  SUBCASE("bad status") {
    const auto data = dir.write("d.csv", "y,a,s\n1,2,1\n1,3,2\n");
    IngestOptions opts;
    opts.status = "s";
    CHECK_THROWS_AS(ingest(data, groups, std::nullopt, opts), ParseError);
  }
}

TEST_CASE("export and re-ingest reproduce the design") {
  TempDir dir;
  Rng rng(51);
  const int n = 30;
  const Matrix X = RandomNormal(n, 4, rng);
  std::string text = "y,a,b,c,d\n";
  for (int i = 0; i < n; ++i) {
    text += std::to_string(i % 2);
    for (int j = 0; j < 4; ++j) text += "," + std::to_string(X(i, j));
    text += "\n";
  }
  const auto data = dir.write("d.csv", text);
  const auto groups = dir.write("g.csv", "a,2\nb,1\nc,2\nd,3\n");
  const Dataset first = ingest(data, groups, std::nullopt);
  export_dataset(first, dir.file("d2.csv"), dir.file("g2.csv"));
  const Dataset second = ingest(dir.file("d2.csv"), dir.file("g2.csv"), std::nullopt);
  CHECK(second.design->values() == first.design->values());
  CHECK(second.y == first.y);
  CHECK(second.group_ids == first.group_ids);
  CHECK(second.design->column_names() == first.design->column_names());
}

TEST_CASE("spline deviation basis") {
  Rng rng(52);
  const int n = 300;
  Vector x(n);
  for (int i = 0; i < n; ++i) x[i] = 4 * Uniform(rng) - 2;
  const Matrix B = spline_deviation_basis(x, 5);
  REQUIRE(B.rows() == n);
  REQUIRE(B.cols() == 5);
  Matrix L(n, 2);
  L << Vector::Ones(n), x;
  CHECK((L.transpose() * B).cwiseAbs().maxCoeff() <= 1e-8 * n);
  Eigen::JacobiSVD<Matrix> svd(B);
  const Vector sv = svd.singularValues();
  CHECK(sv[4] / sv[0] > 1e-6);
  const Matrix G = B.transpose() * B / double(n);
  CHECK((G - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
  // reproduces a smooth nonlinear function much better than the linear fit
  const Vector f = x.array().sin() * 2;
  Matrix full(n, 7);
  full << L, B;
  const Vector r_lin = f - L * L.colPivHouseholderQr().solve(f);
  const Vector r_full = f - full * full.colPivHouseholderQr().solve(f);
  CHECK(r_full.norm() < 0.05 * r_lin.norm());
}

TEST_CASE("spline expansion files") {
  TempDir dir;
  Rng rng(53);
  std::string text = "y,u,v\n";
  for (int i = 0; i < 50; ++i)
    text += std::to_string(Uniform(rng)) + "," + std::to_string(Uniform(rng)) + "," +
            std::to_string(Uniform(rng)) + "\n";
  const auto data = dir.write("d.csv", text);
  expand_splines(data, {"u"}, "y", dir.file("e.csv"), dir.file("g.csv"), dir.file("c.csv"), 4);
  const Dataset d = ingest(dir.file("e.csv"), dir.file("g.csv"), dir.file("c.csv"));
  CHECK(d.design->J() == 4);  // intercept, u, v, spline(u)
  CHECK(d.design->p() == 1 + 2 + 4);
  CHECK(d.constraints.dependencies().size() == 1);
  CHECK_THROWS_AS(expand_splines(data, {"w"}, "y", dir.file("e.csv"), dir.file("g.csv"),
                                 dir.file("c.csv")),
                  ParseError);
}
