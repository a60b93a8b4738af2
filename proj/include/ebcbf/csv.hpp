#pragma once

// Plot-ready CSV files. Lines starting with '#' are comments (config echo,
// input hashes); the first other line is the header.
//
//   dataset:     t,q,p,u
//   trajectory:  t,q,p,u,h_eb,event   (event empty or exit_design_set / violate_true_set)

#include <string>
#include <vector>

#include "ebcbf/sim.hpp"

namespace ebcbf {

inline constexpr const char* kDatasetHeader = "t,q,p,u";
inline constexpr const char* kTrajectoryHeader = "t,q,p,u,h_eb,event";

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

/// Comment lines are written verbatim after a "# " prefix.
std::string dataset_csv(const Dataset& data, const std::vector<std::string>& comments);
Dataset read_dataset_csv(const std::string& path);

std::string trajectory_csv(const Trajectory& tr, const std::vector<std::string>& comments);

}  // namespace ebcbf
