#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "unicorn/layers.hpp"

namespace unicorn {

// Binary weight file: magic "UNICKPT1", then u32 tensor count, then for each
// tensor u32 name length, name bytes, u32 ndim (always 2), u64 rows, u64
// cols, and rows*cols little-endian f64 values. Round trips are bit exact.

void save_checkpoint(std::ostream& os, const ParamList& params);
void save_checkpoint_file(const std::string& path, const ParamList& params);

std::map<std::string, Mat> load_checkpoint(std::istream& is);
std::map<std::string, Mat> load_checkpoint_file(const std::string& path);

}  // namespace unicorn
