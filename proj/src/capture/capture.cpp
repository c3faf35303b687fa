#include "rtb/capture/capture.hpp"

#include <cstring>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rtb/common/errors.hpp"

namespace rtb::capture {

namespace fs = std::filesystem;

std::uint32_t parse_ipv4(const std::string& text) {
  std::uint32_t out = 0;
  std::size_t pos = 0;
  for (int part = 0; part < 4; ++part) {
    const std::size_t next = part < 3 ? text.find('.', pos) : text.size();
    if (next == std::string::npos) throw ConfigError("invalid IPv4 address '" + text + "'");
    const std::string digits = text.substr(pos, next - pos);
    if (digits.empty() || digits.size() > 3 || digits.find_first_not_of("0123456789") != std::string::npos ||
        std::stoi(digits) > 255)
      throw ConfigError("invalid IPv4 address '" + text + "'");
    out = (out << 8) | static_cast<std::uint32_t>(std::stoi(digits));
    pos = next + 1;
  }
  return out;
}

std::string format_ipv4(std::uint32_t ip) {
  return fmt::format("{}.{}.{}.{}", ip >> 24, (ip >> 16) & 0xFF, (ip >> 8) & 0xFF, ip & 0xFF);
}

void set_timestamp(CaptureRecord& rec, SimTime t, std::int64_t epoch_us) {
  const std::int64_t us = epoch_us + t.count() / 1000;
  rec.ts_sec = static_cast<std::uint32_t>(us / 1'000'000);
  rec.ts_usec = static_cast<std::uint32_t>(us % 1'000'000);
}

std::int64_t timestamp_us(const CaptureRecord& rec) {
  return static_cast<std::int64_t>(rec.ts_sec) * 1'000'000 + rec.ts_usec;
}

void validate(const RotationPolicy& policy) {
  if (!policy.max_bytes && !policy.max_duration) throw ConfigError("rotation policy needs at least one finite limit");
  if (policy.max_bytes && *policy.max_bytes <= kGlobalHeaderSize)
    throw ConfigError("rotation max_bytes must exceed the 24-byte global header");
  if (policy.max_duration && *policy.max_duration <= Duration::zero())
    throw ConfigError("rotation max_duration must be positive");
}

namespace {

void put16(Bytes& b, std::uint16_t v) { put_u16be(b, v); }
void put32(Bytes& b, std::uint32_t v) {
  put_u16be(b, static_cast<std::uint16_t>(v >> 16));
  put_u16be(b, static_cast<std::uint16_t>(v & 0xFFFF));
}

std::uint32_t sum16(const std::uint8_t* data, std::size_t n, std::uint32_t acc = 0) {
  for (std::size_t i = 0; i + 1 < n; i += 2) acc += static_cast<std::uint32_t>((data[i] << 8) | data[i + 1]);
  if (n % 2) acc += static_cast<std::uint32_t>(data[n - 1] << 8);
  return acc;
}

std::uint16_t fold(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc & 0xFFFF);
}

void put_mac(Bytes& b, std::uint8_t role, std::uint32_t ip) {
  b.push_back(0x02);  // locally administered
  b.push_back(role);
  put32(b, ip);
}

// Byte 1 of the source MAC records the direction so read_pcap can restore it.
constexpr std::uint8_t kHarnessRole = 0x01;
constexpr std::uint8_t kDeviceRole = 0x02;

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u16(std::ofstream& out, std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); }

}  // namespace

Bytes synthesize_frame(const CaptureRecord& rec, std::uint32_t seq, std::uint16_t ip_id) {
  const bool tcp = rec.transport == Transport::tcp;
  const std::size_t l4 = tcp ? kTcpHeader : kUdpHeader;
  const std::size_t ip_total = kIpv4Header + l4 + rec.payload.size();
  if (ip_total > 0xFFFF) throw IoError(fmt::format("payload of {} bytes does not fit an IPv4 packet", rec.payload.size()));

  Bytes f;
  f.reserve(kEthernetHeader + ip_total);
  const bool to_device = rec.direction == Direction::to_device;
  put_mac(f, to_device ? kDeviceRole : kHarnessRole, rec.dst.ip);
  put_mac(f, to_device ? kHarnessRole : kDeviceRole, rec.src.ip);
  put16(f, 0x0800);

  const std::size_t ip_off = f.size();
  f.push_back(0x45);
  f.push_back(0x00);
  put16(f, static_cast<std::uint16_t>(ip_total));
  put16(f, ip_id);
  put16(f, 0x4000);
  f.push_back(64);
  f.push_back(tcp ? 6 : 17);
  put16(f, 0);
  put32(f, rec.src.ip);
  put32(f, rec.dst.ip);
  const std::uint16_t ip_sum = fold(sum16(&f[ip_off], kIpv4Header));
  f[ip_off + 10] = static_cast<std::uint8_t>(ip_sum >> 8);
  f[ip_off + 11] = static_cast<std::uint8_t>(ip_sum & 0xFF);

  const std::size_t l4_off = f.size();
  put16(f, rec.src.port);
  put16(f, rec.dst.port);
  if (tcp) {
    put32(f, seq);
    put32(f, 0);
    f.push_back(0x50);
    f.push_back(rec.payload.empty() ? 0x02 : 0x18);  // SYN for connection attempts, else PSH|ACK
    put16(f, 0xFFFF);
    put16(f, 0);
    put16(f, 0);
  } else {
    put16(f, static_cast<std::uint16_t>(kUdpHeader + rec.payload.size()));
    put16(f, 0);
  }
  f.insert(f.end(), rec.payload.begin(), rec.payload.end());

  const std::size_t l4_len = f.size() - l4_off;
  Bytes pseudo;
  put32(pseudo, rec.src.ip);
  put32(pseudo, rec.dst.ip);
  pseudo.push_back(0);
  pseudo.push_back(tcp ? 6 : 17);
  put16(pseudo, static_cast<std::uint16_t>(l4_len));
  std::uint16_t sum = fold(sum16(&f[l4_off], l4_len, sum16(pseudo.data(), pseudo.size())));
  if (!tcp && sum == 0) sum = 0xFFFF;
  const std::size_t sum_off = l4_off + (tcp ? 16 : 6);
  f[sum_off] = static_cast<std::uint8_t>(sum >> 8);
  f[sum_off + 1] = static_cast<std::uint8_t>(sum & 0xFF);
  return f;
}

CaptureWriter::CaptureWriter(fs::path directory, RotationPolicy policy, std::int64_t start_unix_us)
    : directory_(std::move(directory)), policy_(policy) {
  validate(policy_);
  std::error_code ec;
  if (!fs::is_directory(directory_, ec))
    throw IoError(fmt::format("capture directory '{}' does not exist", directory_.string()));
  open_file(start_unix_us);
}

CaptureWriter::~CaptureWriter() { close(); }

CaptureWriter open_capture(const fs::path& directory, const RotationPolicy& policy, std::int64_t start_unix_us) {
  return CaptureWriter(directory, policy, start_unix_us);
}

void CaptureWriter::open_file(std::int64_t start_us) {
  fs::path path;
  for (std::int64_t stamp = start_us;; ++stamp) {
    path = directory_ / fmt::format("capture-{}.pcap", stamp);
    if (!fs::exists(path)) break;
  }
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError(fmt::format("cannot create capture file '{}'", path.string()));
  write_u32(out_, kPcapMagic);
  write_u16(out_, 2);
  write_u16(out_, 4);
  write_u32(out_, 0);  // thiszone
  write_u32(out_, 0);  // sigfigs
  write_u32(out_, 65535);
  write_u32(out_, kLinkTypeEthernet);
  if (!out_) throw IoError(fmt::format("cannot write capture file '{}'", path.string()));
  files_.push_back(path);
  file_bytes_ = kGlobalHeaderSize;
  file_packets_ = 0;
  file_start_us_ = start_us;
}

void CaptureWriter::record(const CaptureRecord& rec) {
  if (!out_.is_open()) throw StateError("capture writer is closed");

  Bytes frame;
  const auto flow = std::make_tuple(rec.src.ip, rec.src.port, rec.dst.ip, rec.dst.port);
  std::uint32_t& seq = seq_[flow];
  try {
    frame = synthesize_frame(rec, seq, ip_id_);
  } catch (const IoError&) {
    ++dropped_;
    return;
  }
  seq += static_cast<std::uint32_t>(rec.payload.empty() ? 1 : rec.payload.size());
  ++ip_id_;

  const std::int64_t ts = timestamp_us(rec);
  const std::uint64_t packet_bytes = kPacketHeaderSize + frame.size();
  if (file_packets_ > 0) {
    const bool too_big = policy_.max_bytes && file_bytes_ + packet_bytes > *policy_.max_bytes;
    const bool too_old =
        policy_.max_duration && ts - file_start_us_ >= std::chrono::duration_cast<std::chrono::microseconds>(
                                                           *policy_.max_duration)
                                                           .count();
    if (too_big || too_old) {
      out_.close();
      open_file(ts);
    }
  }
  if (last_ts_us_ && ts < *last_ts_us_) monotonic_ = false;
  last_ts_us_ = ts;

  write_u32(out_, rec.ts_sec);
  write_u32(out_, rec.ts_usec);
  write_u32(out_, static_cast<std::uint32_t>(frame.size()));
  write_u32(out_, static_cast<std::uint32_t>(frame.size()));
  out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  if (!out_) throw IoError(fmt::format("write failed on '{}'", files_.back().string()));
  file_bytes_ += packet_bytes;
  ++file_packets_;
  ++records_;
}

void CaptureWriter::close() {
  if (out_.is_open()) out_.close();
}

void CaptureWriter::write_manifest(const fs::path& path) const {
  nlohmann::json j;
  j["files"] = nlohmann::json::array();
  for (const auto& f : files_) j["files"].push_back(f.filename().string());
  j["records"] = records_;
  j["dropped"] = dropped_;
  j["monotonic"] = monotonic_;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write manifest '{}'", path.string()));
  out << j.dump(2) << '\n';
}

AsyncCapture::AsyncCapture(CaptureWriter& writer, std::size_t capacity) : writer_(writer), capacity_(capacity) {
  thread_ = std::thread([this] { run(); });
}

AsyncCapture::~AsyncCapture() { stop(); }

void AsyncCapture::submit(CaptureRecord rec) {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ || queue_.size() >= capacity_) {
      ++overflow_;
      return;
    }
    queue_.push_back(std::move(rec));
  }
  cv_.notify_one();
}

void AsyncCapture::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_one();
  if (thread_.joinable()) thread_.join();
  writer_.note_dropped(overflow_);
  overflow_ = 0;
}

void AsyncCapture::run() {
  std::unique_lock lock(mutex_);
  for (;;) {
    cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    while (!queue_.empty()) {
      CaptureRecord rec = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      try {
        writer_.record(rec);
      } catch (const std::exception&) {
        writer_.note_dropped(1);
      }
      lock.lock();
    }
    if (stopping_) return;
  }
}

namespace {

struct Reader {
  const Bytes& data;
  std::size_t pos = 0;
  bool swapped = false;

  std::uint32_t u32(std::size_t at) const {
    std::uint32_t v;
    std::memcpy(&v, &data[at], 4);
    return swapped ? __builtin_bswap32(v) : v;
  }
};

}  // namespace

std::vector<CaptureRecord> read_pcap(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r{data};
  if (data.size() < kGlobalHeaderSize) throw ParseError("truncated pcap global header", data.size());
  std::uint32_t magic;
  std::memcpy(&magic, data.data(), 4);
  if (magic == __builtin_bswap32(kPcapMagic)) r.swapped = true;
  else if (magic != kPcapMagic) throw ParseError(fmt::format("bad pcap magic {:#010x}", magic), 0);
  if (r.u32(20) != kLinkTypeEthernet) throw ParseError("unsupported link type", 20);

  std::vector<CaptureRecord> out;
  std::size_t pos = kGlobalHeaderSize;
  while (pos < data.size()) {
    if (data.size() - pos < kPacketHeaderSize) throw ParseError(fmt::format("truncated packet header at offset {}", pos), pos);
    CaptureRecord rec;
    rec.ts_sec = r.u32(pos);
    rec.ts_usec = r.u32(pos + 4);
    const std::uint32_t incl = r.u32(pos + 8);
    const std::size_t body = pos + kPacketHeaderSize;
    if (data.size() - body < incl) throw ParseError(fmt::format("truncated packet data at offset {}", pos), pos);

    const std::uint8_t* f = &data[body];
    auto be16 = [&](std::size_t off) { return get_u16be(f + off); };
    auto be32 = [&](std::size_t off) {
      return (static_cast<std::uint32_t>(be16(off)) << 16) | be16(off + 2);
    };
    if (incl < kEthernetHeader + kIpv4Header || be16(12) != 0x0800)
      throw ParseError(fmt::format("non-IPv4 frame at offset {}", pos), pos);
    const std::size_t ip = kEthernetHeader;
    const std::size_t ihl = (f[ip] & 0x0F) * 4u;
    const std::uint8_t proto = f[ip + 9];
    const std::size_t ip_total = be16(ip + 2);
    if (ihl < kIpv4Header || ip + ip_total > incl || (proto != 6 && proto != 17))
      throw ParseError(fmt::format("malformed IPv4 packet at offset {}", pos), pos);
    rec.src.ip = be32(ip + 12);
    rec.dst.ip = be32(ip + 16);
    const std::size_t l4 = ip + ihl;
    rec.src.port = be16(l4);
    rec.dst.port = be16(l4 + 2);
    std::size_t payload_off;
    if (proto == 6) {
      rec.transport = Transport::tcp;
      payload_off = l4 + ((f[l4 + 12] >> 4) * 4u);
    } else {
      rec.transport = Transport::udp;
      payload_off = l4 + kUdpHeader;
    }
    if (payload_off > ip + ip_total) throw ParseError(fmt::format("malformed transport header at offset {}", pos), pos);
    rec.payload.assign(f + payload_off, f + ip + ip_total);
    rec.direction = f[7] == kDeviceRole ? Direction::from_device : Direction::to_device;
    out.push_back(std::move(rec));
    pos = body + incl;
  }
  return out;
}

}  // namespace rtb::capture
