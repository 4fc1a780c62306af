#pragma once

#include <string>
#include <vector>

#include "emtest/glm.hpp"

namespace emtest {

// CSV contract: first row holds headers, UTF-8, '.' decimal separator, no
// quoting, NA/empty cells rejected. Errors name the offending row/column.
Dataset read_dataset_csv(const std::string& path, const std::string& response,
                         const std::vector<std::string>& x_columns,
                         const std::vector<std::string>& z_columns,
                         const Family& family);

void write_dataset_csv(const std::string& path, const Dataset& data,
                       const std::string& response,
                       const std::vector<std::string>& x_columns,
                       const std::vector<std::string>& z_columns);

}  // namespace emtest
