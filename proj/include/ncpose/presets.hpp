#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ncpose/types.hpp"

namespace ncpose {

// Built-in mirror presets (cm units). The shipped names are "hyperbolic",
// "parabolic" and "spheric".
template <typename S>
QuadricMirror<S> preset_mirror(std::string_view name) {
  if (name == "hyperbolic")
    return {S(-1.2), S(3.4), S(-33.2), Vec3<S>(S(0), S(25), S(25))};
  if (name == "parabolic")
    return {S(0), S(20.4), S(53.2), Vec3<S>(S(0), S(30), S(20))};
  if (name == "spheric")
    return {S(1), S(0), S(900), Vec3<S>(S(0), S(-15), S(55))};
  throw std::invalid_argument("unknown mirror preset: " + std::string(name));
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"hyperbolic", "parabolic",
                                                 "spheric"};
  return names;
}

}  // namespace ncpose
