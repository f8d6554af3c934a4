#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dlab/report.hpp"

using namespace dlab::report;

namespace {

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

Chart two_series() {
  Chart c;
  c.title = "loss <train & test>";
  c.x_label = "step";
  c.y_label = "loss";
  c.series.push_back({"train", {0, 1, 2}, {3, 2, 1}});
  c.series.push_back({"test", {0, 1, 2}, {3.5, 2.5, 2}});
  return c;
}

}  // namespace

TEST_CASE("svg has one polyline per series and escapes text") {
  const std::string svg = render_svg(two_series());
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count_of(svg, "<polyline") == 2);
  CHECK(svg.find("loss &lt;train &amp; test&gt;") != std::string::npos);
  CHECK(svg.find(">train<") != std::string::npos);
}

TEST_CASE("svg output is deterministic") {
  CHECK(render_svg(two_series()) == render_svg(two_series()));
  Chart quiet = two_series();
  quiet.legend = false;
  CHECK(render_svg(quiet).find(">train<") == std::string::npos);
}

TEST_CASE("log axis drops non-positive values") {
  Chart c;
  c.log_y = true;
  c.series.push_back({"s", {0, 1, 2, 3}, {1, 0, 1e-3, -1}});
  const std::string svg = render_svg(c);
  const auto start = svg.find("points=\"");
  REQUIRE(start != std::string::npos);
  const std::string pts = svg.substr(start + 8, svg.find('"', start + 8) - start - 8);
  std::istringstream is(pts);
  std::string tok;
  std::size_t n = 0;
  while (is >> tok) ++n;
  CHECK(n == 2);
}

TEST_CASE("write_svg writes the rendered text") {
  const auto path = std::filesystem::temp_directory_path() / "dlab_chart.svg";
  write_svg(path, two_series());
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  CHECK(ss.str() == render_svg(two_series()));
  std::filesystem::remove(path);
}
