#pragma once

// File formats. Every output carries the resolved configuration:
//  - CSV: first line "# config: <json>", then a header row and data rows.
//  - JSON: {"config": ..., "result": ...}.
//  - binary: 8-byte magic, u64 header length, header JSON (with "config"),
//    u64 record count, then little-endian doubles.
//      ROTRTRJ1  trajectory, records of (alpha, omega, time)
//      ROTRSIG1  detector trace, one sample per record

#include <string>
#include <vector>

#include <json.hpp>

#include "rotor/dynamics.hpp"
#include "rotor/signal.hpp"

namespace rotor {

inline constexpr const char* kConfigHeaderTag = "# config: ";
inline constexpr const char* kTrajectoryMagic = "ROTRTRJ1";
inline constexpr const char* kTraceMagic = "ROTRSIG1";

bool is_binary_output(const std::string& first_eight_bytes);

void write_trajectory(const std::string& path, const Trajectory& traj, const nlohmann::json& config);
Trajectory read_trajectory(const std::string& path);

void write_trace(const std::string& path, const SignalTrace& trace, const nlohmann::json& config);
/// Throws std::runtime_error for an unreadable or truncated file.
SignalTrace read_trace(const std::string& path, nlohmann::json* config = nullptr);

nlohmann::json read_binary_header(const std::string& path);

/// CSV writer that stamps the config line and the column header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const nlohmann::json& config, const std::vector<std::string>& columns);
  ~CsvWriter();

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(long v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(const std::string& v);
  CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
  void end_row();

 private:
  struct Impl;
  Impl* impl_;
};

void write_json(const std::string& path, const nlohmann::json& config, const nlohmann::json& result);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

}  // namespace rotor
