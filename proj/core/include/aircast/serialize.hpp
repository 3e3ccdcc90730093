#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "aircast/models.hpp"

namespace aircast {

// Versioned binary weight container.
//   magic "CRNNW1"
//   per entry: u32 name length, name bytes, u32 rank, u64 dims[rank],
//              little-endian f64 payload
//   u32 zero sentinel, then u64 FNV-1a checksum of all payload bytes
// All integers little-endian.
void write_weight_container(std::ostream& out, const std::vector<Param>& entries);
std::vector<Param> read_weight_container(std::istream& in);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size, std::uint64_t seed);

// Model files are a weight container (trainable parameters, batch-norm
// running statistics under "state.", the geography map under "static.")
// followed by a metadata trailer: "META", u32 byte length, then `key = value`
// lines echoing the config, theta_max and seed. The creation timestamp is
// omitted when with_timestamp is false so identical runs produce identical
// bytes.
void save_frame_model(const std::string& path, const FrameModel& model,
                      bool with_timestamp = true);
FrameModel load_frame_model(const std::string& path);

std::map<std::string, std::string> read_model_meta(const std::string& path);

}  // namespace aircast
