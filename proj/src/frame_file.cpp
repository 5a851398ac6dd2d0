#include "scorestream/frame_file.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "scorestream/binary_io.hpp"
#include "scorestream/error.hpp"

namespace scorestream {

namespace {

std::uint32_t load_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void store_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

bool pread_all(int fd, void* buf, std::size_t n, std::uint64_t at) {
    auto* out = static_cast<std::uint8_t*>(buf);
    std::size_t done = 0;
    while (done < n) {
        const ssize_t r = ::pread(fd, out + done, n - done, static_cast<off_t>(at + done));
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return false;
        done += static_cast<std::size_t>(r);
    }
    return true;
}

}  // namespace

FrameFile::FrameFile(std::filesystem::path path, bool sync) : path_(std::move(path)), sync_(sync) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw runtime_error("cannot open " + path_.string() + ": " + std::strerror(errno));
    }
}

FrameFile::~FrameFile() {
    if (fd_ >= 0) ::close(fd_);
}

std::uint64_t FrameFile::size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw runtime_error("fstat failed on " + path_.string());
    return static_cast<std::uint64_t>(st.st_size);
}

FrameFile::Scan FrameFile::scan(std::uint64_t from, bool repair, std::uint64_t first_index) {
    Scan out;
    const std::uint64_t file_size = size();
    std::uint64_t pos = from;
    std::vector<std::uint8_t> body;
    while (pos < file_size) {
        std::uint8_t header[kHeaderSize];
        if (file_size - pos < kHeaderSize || !pread_all(fd_, header, kHeaderSize, pos)) break;
        const std::uint32_t len = load_u32(header);
        const std::uint32_t crc = load_u32(header + 4);
        const std::uint64_t frame_end = pos + kHeaderSize + len;
        if (len > kMaxBody || frame_end > file_size) break;
        body.resize(len);
        if (len > 0 && !pread_all(fd_, body.data(), len, pos + kHeaderSize)) break;
        if (crc32(body) != crc) {
            if (repair && frame_end < file_size) {
                throw integrity_error(path_.string() + ": checksum failure on record at offset " +
                                      std::to_string(first_index + out.starts.size()) + " (byte " +
                                      std::to_string(pos) + ") followed by further data");
            }
            break;
        }
        out.starts.push_back(pos);
        pos = frame_end;
    }
    out.end = pos;
    out.torn_bytes = file_size > pos ? file_size - pos : 0;
    if (repair && out.torn_bytes > 0) {
        if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) {
            throw runtime_error("cannot truncate torn tail of " + path_.string() + ": " + std::strerror(errno));
        }
        if (sync_) ::fdatasync(fd_);
    }
    return out;
}

std::uint64_t FrameFile::append(std::string_view body, std::uint64_t expected_end) {
    const std::string one(body);
    return append_all(std::span(&one, 1), expected_end).front();
}

std::vector<std::uint64_t> FrameFile::append_all(std::span<const std::string> bodies, std::uint64_t expected_end) {
    std::vector<std::uint8_t> buf;
    std::vector<std::uint64_t> starts;
    starts.reserve(bodies.size());
    for (const auto& body : bodies) {
        if (body.size() > kMaxBody) {
            throw config_error("record of " + std::to_string(body.size()) + " bytes exceeds limit");
        }
        starts.push_back(expected_end + buf.size());
        const std::size_t at = buf.size();
        buf.resize(at + kHeaderSize + body.size());
        store_u32(buf.data() + at, static_cast<std::uint32_t>(body.size()));
        store_u32(buf.data() + at + 4, crc32(body));
        std::memcpy(buf.data() + at + kHeaderSize, body.data(), body.size());
    }

    std::size_t done = 0;
    while (done < buf.size()) {
        const ssize_t n = ::pwrite(fd_, buf.data() + done, buf.size() - done, static_cast<off_t>(expected_end + done));
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            const int err = errno;
            [[maybe_unused]] int rc = ::ftruncate(fd_, static_cast<off_t>(expected_end));
            throw runtime_error("append to " + path_.string() + " failed: " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    if (sync_ && ::fdatasync(fd_) != 0) {
        const int err = errno;
        [[maybe_unused]] int rc = ::ftruncate(fd_, static_cast<off_t>(expected_end));
        throw runtime_error("sync of " + path_.string() + " failed: " + std::strerror(err));
    }
    return starts;
}

std::string FrameFile::read_body(std::uint64_t start) const {
    std::uint8_t header[kHeaderSize];
    if (!pread_all(fd_, header, kHeaderSize, start)) {
        throw integrity_error(path_.string() + ": cannot read frame header at byte " + std::to_string(start));
    }
    const std::uint32_t len = load_u32(header);
    std::string body(len, '\0');
    if (len > 0 && !pread_all(fd_, body.data(), len, start + kHeaderSize)) {
        throw integrity_error(path_.string() + ": cannot read frame body at byte " + std::to_string(start));
    }
    return body;
}

FrameFile::Lock::Lock(const FrameFile& file, bool exclusive) : fd_(file.fd_) {
    while (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
        if (errno != EINTR) throw runtime_error("flock failed on " + file.path_.string());
    }
}

FrameFile::Lock::~Lock() { ::flock(fd_, LOCK_UN); }

}  // namespace scorestream
