#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace filmrec::cli {

namespace fs = std::filesystem;

struct GenArgs {
  std::optional<fs::path> config;
  std::uint64_t seed = 0;
  int n = 1;
  fs::path out;
  int jobs = 0;
  bool json = false;
};

struct DewarpArgs {
  std::optional<fs::path> sample;
  int index = 0;
  std::optional<fs::path> uv, deform, mask, image, texture;
  int tex_h = 0;
  int tex_w = 0;
  std::string source = "warped";
  bool no_merge = false;
  double fill = 0.0;
  fs::path out;
  bool json = false;
};

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  std::string deshift = "map";
  int radius = 8;
  std::optional<fs::path> out;
  int jobs = 0;
  bool json = false;
};

struct FitArgs {
  fs::path sample;
  int index = 0;
  std::optional<fs::path> config;
  std::vector<double> init;
  fs::path out;
  bool json = false;
};

struct RestoreArgs {
  fs::path image;
  fs::path meta;
  std::optional<fs::path> mask;
  double sigma = 0.0;
  bool no_flatfield = false;
  fs::path out;
  bool json = false;
};

struct RadiomicsArgs {
  fs::path pred;
  fs::path gt;
  fs::path out;
  bool json = false;
};

struct SelftestArgs {
  std::vector<std::string> inject;
  bool json = false;
};

int cmd_gen(const GenArgs& a);
int cmd_dewarp(const DewarpArgs& a);
int cmd_eval(const EvalArgs& a);
int cmd_fit(const FitArgs& a);
int cmd_restore(const RestoreArgs& a);
int cmd_radiomics(const RadiomicsArgs& a);
int cmd_selftest(const SelftestArgs& a);

}  // namespace filmrec::cli
