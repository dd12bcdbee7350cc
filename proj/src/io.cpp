#include "rotor/io.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rotor {

using nlohmann::json;

static_assert(sizeof(double) == 8, "binary formats assume IEEE doubles");

namespace {

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error(path + ": truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_double(std::ofstream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

double get_double(std::ifstream& in, const std::string& path) {
  const std::uint64_t bits = get_u64(in, path);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void write_header(std::ofstream& out, const char* magic, const json& header) {
  out.write(magic, 8);
  const std::string text = header.dump();
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

// Opens `path`, checks the magic and returns the header; the stream is left
// at the record count.
json read_header(std::ifstream& in, const std::string& path, const char* magic) {
  if (!in) throw std::runtime_error("cannot open " + path);
  char m[8];
  if (!in.read(m, 8) || (magic && std::memcmp(m, magic, 8) != 0))
    throw std::runtime_error(path + ": not a " + std::string(magic ? magic : "rotorctl") + " file");
  if (!magic && !is_binary_output(std::string(m, 8))) throw std::runtime_error(path + ": not a rotorctl binary file");
  const std::uint64_t n = get_u64(in, path);
  if (n > (1u << 26)) throw std::runtime_error(path + ": corrupt header length");
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) throw std::runtime_error(path + ": truncated header");
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    throw std::runtime_error(path + ": corrupt header");
  }
}

}  // namespace

bool is_binary_output(const std::string& head) {
  return head.size() == 8 && (head == kTrajectoryMagic || head == kTraceMagic);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_trajectory(const std::string& path, const Trajectory& traj, const json& config) {
  auto out = open_out(path);
  const json header = {
      {"config", config},
      {"periods", traj.periods},
      {"samples_per_period", traj.samples_per_period},
      {"drive", {{"frequency", traj.drive.frequency}, {"duty", traj.drive.duty}}},
      {"coefficients",
       {{"damping", traj.coeffs.damping},
        {"torque", traj.coeffs.torque},
        {"potential", traj.coeffs.potential},
        {"inertia", traj.coeffs.inertia}}},
      {"integrator",
       {{"steps_per_half_period", traj.settings.steps_per_half_period},
        {"transient_periods", traj.settings.transient_periods},
        {"output_stride", traj.settings.output_stride}}},
      {"external_torque", traj.external_torque},
      {"columns", {"alpha", "omega", "time"}},
  };
  write_header(out, kTrajectoryMagic, header);
  put_u64(out, traj.states.size());
  for (const auto& s : traj.states) {
    put_double(out, s.alpha);
    put_double(out, s.omega);
    put_double(out, s.time);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  const json h = read_header(in, path, kTrajectoryMagic);
  Trajectory t;
  try {
    t.periods = h.at("periods").get<long>();
    t.samples_per_period = h.at("samples_per_period").get<int>();
    t.drive.frequency = h.at("drive").at("frequency").get<double>();
    t.drive.duty = h.at("drive").at("duty").get<double>();
    const auto& c = h.at("coefficients");
    t.coeffs = {c.at("damping").get<double>(), c.at("torque").get<double>(), c.at("potential").get<double>(),
                c.at("inertia").get<double>()};
    const auto& s = h.at("integrator");
    t.settings.steps_per_half_period = s.at("steps_per_half_period").get<int>();
    t.settings.transient_periods = s.at("transient_periods").get<int>();
    t.settings.output_stride = s.at("output_stride").get<int>();
    t.external_torque = h.at("external_torque").get<double>();
  } catch (const json::exception&) {
    throw std::runtime_error(path + ": incomplete trajectory header");
  }
  const std::uint64_t n = get_u64(in, path);
  t.states.resize(n);
  for (auto& s : t.states) {
    s.alpha = get_double(in, path);
    s.omega = get_double(in, path);
    s.time = get_double(in, path);
  }
  return t;
}

void write_trace(const std::string& path, const SignalTrace& trace, const json& config) {
  auto out = open_out(path);
  const json header = {
      {"config", config},
      {"sample_rate", trace.sample_rate},
      {"carrier", trace.carrier},
      {"start_time", trace.start_time},
      {"filter_delay", trace.filter_delay},
  };
  write_header(out, kTraceMagic, header);
  put_u64(out, trace.samples.size());
  for (double v : trace.samples) put_double(out, v);
  if (!out) throw std::runtime_error("write failed: " + path);
}

SignalTrace read_trace(const std::string& path, json* config) {
  std::ifstream in(path, std::ios::binary);
  const json h = read_header(in, path, kTraceMagic);
  SignalTrace t;
  try {
    t.sample_rate = h.at("sample_rate").get<double>();
    t.carrier = h.at("carrier").get<double>();
    t.start_time = h.at("start_time").get<double>();
    t.filter_delay = h.at("filter_delay").get<double>();
  } catch (const json::exception&) {
    throw std::runtime_error(path + ": incomplete trace header");
  }
  if (config) *config = h.value("config", json::object());
  const std::uint64_t n = get_u64(in, path);
  t.samples.resize(n);
  for (double& v : t.samples) v = get_double(in, path);
  return t;
}

json read_binary_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return read_header(in, path, nullptr);
}

struct CsvWriter::Impl {
  std::ofstream out;
  bool first = true;
};

CsvWriter::CsvWriter(const std::string& path, const json& config, const std::vector<std::string>& columns)
    : impl_(new Impl) {
  impl_->out.open(path, std::ios::trunc);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("cannot write " + path);
  }
  impl_->out << kConfigHeaderTag << config.dump() << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) impl_->out << (i ? "," : "") << columns[i];
  impl_->out << '\n';
}

CsvWriter::~CsvWriter() { delete impl_; }

CsvWriter& CsvWriter::operator<<(double v) { return *this << format_double(v); }

CsvWriter& CsvWriter::operator<<(long long v) { return *this << std::to_string(v); }

CsvWriter& CsvWriter::operator<<(const std::string& v) {
  if (!impl_->first) impl_->out << ',';
  impl_->out << v;
  impl_->first = false;
  return *this;
}

void CsvWriter::end_row() {
  impl_->out << '\n';
  impl_->first = true;
}

void write_json(const std::string& path, const json& config, const json& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << json{{"config", config}, {"result", result}}.dump(2) << '\n';
}

}  // namespace rotor
