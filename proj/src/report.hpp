// Copyright 2026 The AIS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AIS_SRC_REPORT_HPP
#define AIS_SRC_REPORT_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ais::detail {

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (budget, log10 MSE)
};

/// Static line chart, log10 MSE against budget.
void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<ChartSeries>& series);

/// Shortest representation that parses back to the same double; "nan" for NaN.
std::string format_double(double value);
double parse_double(const std::string& text);

}  // namespace ais::detail

#endif  // AIS_SRC_REPORT_HPP
