#pragma once

// Append-only file of checksummed frames: [u32 length][u32 crc32][body].
//
// Shared by the broker segments and the time-series store log. A frame that
// is cut short or fails its checksum at the very end of the file is treated
// as a torn write and truncated; a bad frame followed by more data is
// corruption and is never silently dropped.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scorestream {

class FrameFile {
public:
    static constexpr std::uint32_t kHeaderSize = 8;
    static constexpr std::uint32_t kMaxBody = 64u << 20;

    struct Scan {
        std::vector<std::uint64_t> starts;  ///< file position of each intact frame
        std::uint64_t end = 0;              ///< byte just past the last intact frame
        std::uint64_t torn_bytes = 0;       ///< bytes after `end` that do not form a frame
    };

    /// Opens (creating if needed). `sync` makes every append fdatasync before returning.
    FrameFile(std::filesystem::path path, bool sync);
    ~FrameFile();

    FrameFile(const FrameFile&) = delete;
    FrameFile& operator=(const FrameFile&) = delete;

    /// Scans frames starting at `from`. With `repair`, a torn tail is truncated
    /// and mid-file corruption throws integrity_error naming the frame index
    /// (counted from `first_index`). Without `repair`, scanning simply stops
    /// at the first frame that is not intact.
    Scan scan(std::uint64_t from, bool repair, std::uint64_t first_index = 0);

    /// Appends one frame at `expected_end` (the caller's view of the end of
    /// the file) and returns its start. On a failed write the file is cut back
    /// so no partial frame stays visible.
    std::uint64_t append(std::string_view body, std::uint64_t expected_end);

    /// Appends several frames with one write (and one sync). Returns their starts.
    std::vector<std::uint64_t> append_all(std::span<const std::string> bodies, std::uint64_t expected_end);

    /// Body of the frame starting at `start`.
    std::string read_body(std::uint64_t start) const;

    std::uint64_t size() const;
    const std::filesystem::path& path() const { return path_; }

    /// Advisory whole-file lock (flock) coordinating separate processes.
    class Lock {
    public:
        Lock(const FrameFile& file, bool exclusive);
        ~Lock();
        Lock(const Lock&) = delete;
        Lock& operator=(const Lock&) = delete;

    private:
        int fd_;
    };

private:
    std::filesystem::path path_;
    int fd_ = -1;
    bool sync_;
};

}  // namespace scorestream
