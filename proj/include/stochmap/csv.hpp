#pragma once

#include <complex>
#include <fstream>
#include <string>
#include <vector>

namespace stochmap {

std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Fixed-format writer so identical inputs give identical bytes.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void header(const std::vector<std::string>& names);
  CsvWriter& cell(long long v);
  CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
  CsvWriter& cell(double v);
  CsvWriter& cell(std::complex<double> v);  // two columns: Re, Im
  CsvWriter& cell(const std::string& s);
  void end_row();

 private:
  std::ofstream out_;
  bool first_ = true;
};

std::string format_double(double v);

}  // namespace stochmap
