#pragma once
// OVTF tensor files: magic "OVTF", version byte (1), dtype byte
// (1 = f32 LE, 2 = f64 LE), rank byte, rank x u64 LE extents, row-major
// payload. Round-trips are bit-exact for the stored dtype.

#include <cstdint>
#include <string>

#include "ovvis/tensor.hpp"

namespace ovvis {

enum class OvtfDtype : uint8_t { kF32 = 1, kF64 = 2 };

void save_ovtf(const std::string& path, const Tensor& t,
               OvtfDtype dtype = OvtfDtype::kF64);
Tensor load_ovtf(const std::string& path);
OvtfDtype ovtf_dtype(const std::string& path);

}  // namespace ovvis
