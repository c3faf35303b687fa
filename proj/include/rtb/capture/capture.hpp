#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "rtb/common/bytes.hpp"
#include "rtb/common/time.hpp"

namespace rtb::capture {

enum class Direction { to_device, from_device };
enum class Transport { tcp, udp };

/// IPv4 address in host byte order plus port.
struct SocketAddress {
  std::uint32_t ip = 0;
  std::uint16_t port = 0;
  friend bool operator==(const SocketAddress&, const SocketAddress&) = default;
};

std::uint32_t parse_ipv4(const std::string& text);
std::string format_ipv4(std::uint32_t ip);

struct CaptureRecord {
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  SocketAddress src;
  SocketAddress dst;
  Direction direction = Direction::to_device;
  Bytes payload;
  Transport transport = Transport::tcp;

  friend bool operator==(const CaptureRecord&, const CaptureRecord&) = default;
};

/// Splits `epoch_us + t` into pcap (seconds, microseconds).
void set_timestamp(CaptureRecord& rec, SimTime t, std::int64_t epoch_us);
std::int64_t timestamp_us(const CaptureRecord& rec);

struct RotationPolicy {
  std::optional<std::uint64_t> max_bytes = 64ull << 20;
  std::optional<Duration> max_duration = std::chrono::minutes(10);
};

void validate(const RotationPolicy& policy);

inline constexpr std::size_t kGlobalHeaderSize = 24;
inline constexpr std::size_t kPacketHeaderSize = 16;
inline constexpr std::uint32_t kPcapMagic = 0xa1b2c3d4;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kEthernetHeader = 14;
inline constexpr std::size_t kIpv4Header = 20;
inline constexpr std::size_t kTcpHeader = 20;
inline constexpr std::size_t kUdpHeader = 8;

/// Builds the Ethernet + IPv4 + TCP/UDP frame carrying `rec.payload`.
/// `seq` is the TCP sequence number; ignored for UDP.
Bytes synthesize_frame(const CaptureRecord& rec, std::uint32_t seq, std::uint16_t ip_id);

/// Anything that accepts capture records. Must be safe to call from the
/// thread that owns the producer.
class CaptureSink {
 public:
  virtual ~CaptureSink() = default;
  virtual void submit(CaptureRecord rec) = 0;
};

/// Classic-pcap writer with size/time rotation. Files are named
/// `capture-<unix_start_us>.pcap`. Not thread-safe; see AsyncCapture.
class CaptureWriter final : public CaptureSink {
 public:
  /// Creates the first file; throws IoError if `directory` is not writable.
  CaptureWriter(std::filesystem::path directory, RotationPolicy policy, std::int64_t start_unix_us);
  ~CaptureWriter() override;
  CaptureWriter(const CaptureWriter&) = delete;
  CaptureWriter& operator=(const CaptureWriter&) = delete;

  void submit(CaptureRecord rec) override { record(rec); }
  void record(const CaptureRecord& rec);
  void close();
  void note_dropped(std::uint64_t n) { dropped_ += n; }

  const std::vector<std::filesystem::path>& files() const { return files_; }
  std::uint64_t records() const { return records_; }
  std::uint64_t dropped() const { return dropped_; }
  bool monotonic() const { return monotonic_; }

  /// Writes `{files[], records, dropped, monotonic}` as JSON.
  void write_manifest(const std::filesystem::path& path) const;

 private:
  void open_file(std::int64_t start_us);

  std::filesystem::path directory_;
  RotationPolicy policy_;
  std::ofstream out_;
  std::vector<std::filesystem::path> files_;
  std::uint64_t file_bytes_ = 0;
  std::uint64_t file_packets_ = 0;
  std::int64_t file_start_us_ = 0;
  std::optional<std::int64_t> last_ts_us_;
  std::uint64_t records_ = 0;
  std::uint64_t dropped_ = 0;
  bool monotonic_ = true;
  std::uint16_t ip_id_ = 0;
  std::map<std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>, std::uint32_t> seq_;
};

CaptureWriter open_capture(const std::filesystem::path& directory, const RotationPolicy& policy,
                           std::int64_t start_unix_us);

/// Bounded producer queue in front of a CaptureWriter, drained by one
/// writer thread. `submit` never blocks; overflow is counted as dropped.
class AsyncCapture final : public CaptureSink {
 public:
  AsyncCapture(CaptureWriter& writer, std::size_t capacity = 65536);
  ~AsyncCapture() override;

  void submit(CaptureRecord rec) override;
  /// Drains the queue and stops the writer thread.
  void stop();

 private:
  void run();

  CaptureWriter& writer_;
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<CaptureRecord> queue_;
  bool stopping_ = false;
  std::uint64_t overflow_ = 0;
  std::thread thread_;
};

/// Reads a classic pcap file written by CaptureWriter. Throws ParseError
/// with the byte offset on bad magic or truncation.
std::vector<CaptureRecord> read_pcap(const std::filesystem::path& path);

}  // namespace rtb::capture
