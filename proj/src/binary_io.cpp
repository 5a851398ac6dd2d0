#include "scorestream/binary_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdio>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "scorestream/rng.hpp"

namespace scorestream {

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
    uLong crc = seed;
    const Bytef* p = bytes.data();
    std::size_t n = bytes.size();
    // zlib takes uInt lengths
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = ::crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32(std::string_view bytes, std::uint32_t seed) {
    return crc32(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), seed);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw integrity_error("cannot open " + path.string());
    }
    std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw integrity_error("read failure on " + path.string());
    }
    return out;
}

std::string content_checksum(std::span<const std::uint8_t> bytes) {
    const auto h = fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_checksum(const std::filesystem::path& path) { return content_checksum(read_file_bytes(path)); }

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes, bool sync) {
    static std::atomic<std::uint64_t> counter{0};
    // unique per writer so concurrent writers never share a temp file
    const auto tmp = std::filesystem::path(path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                                           std::to_string(counter.fetch_add(1)));
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw runtime_error("cannot create " + tmp.string() + ": " + std::strerror(errno));
    }
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            ::unlink(tmp.c_str());
            throw runtime_error("write failed on " + tmp.string() + ": " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    if ((sync && ::fsync(fd) != 0) || ::close(fd) != 0) {
        ::unlink(tmp.c_str());
        throw runtime_error("sync failed on " + tmp.string());
    }
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        const int err = errno;
        ::unlink(tmp.c_str());
        throw runtime_error("rename to " + path.string() + " failed: " + std::strerror(err));
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text, bool sync) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), sync);
}

}  // namespace scorestream
