#pragma once

#include <string>
#include <vector>

#include "bnnood/data.hpp"

namespace bnnood {

// Dataset spec mini-language shared by the data-bearing flags:
//   toy[:n=..,std=..,seed=..]          4-cluster Gaussians at (+-2,+-2)
//   uniform:dim=..,n=..,low=..,high=..,seed=..
//   ring:rlo=..,rhi=..,n=..,seed=..
//   idx:IMAGES,LABELS
//   csv:PATH
//   smooth:from=IMAGES,labels=LABELS[,n=..,seed=..]
LabeledSet parse_data_spec(const std::string& spec);

// Runs the bnnood command line. Returns the process exit code:
// 0 success, 2 usage/config error, 3 numerical abort.
int run_cli(const std::vector<std::string>& args);

}  // namespace bnnood
