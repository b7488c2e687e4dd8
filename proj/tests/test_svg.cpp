#include <doctest.h>

#include "crossgrid/svg.hpp"

using namespace crossgrid;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("dendrogram svg") {
  similarity::DistanceMatrix d;
  d.ids = {"1", "2", "3"};
  d.values = Eigen::MatrixXd(3, 3);
  d.values << 0, 1, 4, 1, 0, 4, 4, 4, 0;
  auto tree = similarity::linkage(d);
  svg::Options opt;
  opt.title = "a <b> & c";
  opt.comments = {"seed: 1", "x -- y"};
  auto s = svg::dendrogram(tree, opt, 2.8);
  CHECK(s.rfind("<svg ", 0) == 0);
  CHECK(s.find("</svg>") != std::string::npos);
  CHECK(count(s, "<path ") == 2);
  CHECK(s.find("stroke-dasharray") != std::string::npos);
  CHECK(s.find("a &lt;b&gt; &amp; c") != std::string::npos);
  CHECK(s.find("x - - y") != std::string::npos);
  CHECK(s.find("generated:") == std::string::npos);
  CHECK(svg::dendrogram(tree, opt, 2.8) == s);
  opt.timestamp = "2020-01-01T00:00:00Z";
  CHECK(svg::dendrogram(tree, opt).find("generated: 2020-01-01T00:00:00Z") != std::string::npos);
}

TEST_CASE("heatmap svg") {
  Eigen::MatrixXd m(2, 2);
  m << 0.0, 1.0, 0.5, 0.25;
  auto s = svg::heatmap({"1", "2"}, m);
  CHECK(count(s, "<title>") == 4);
  CHECK(s.find("#ffffd9") != std::string::npos);  // minimum
  CHECK(s.find("#081d58") != std::string::npos);  // maximum
  CHECK(s.find("trained on") != std::string::npos);
  CHECK_THROWS_AS(svg::heatmap({"1"}, m), Error);
}
