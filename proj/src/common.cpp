#include "slidekit/common.hpp"

#include <cstdio>
#include <filesystem>

namespace slidekit {

void atomic_write_file(const std::string& path, const void* data, size_t size) {
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) {
        throw DataError("cannot open for writing: " + tmp);
    }
    if (size > 0 && std::fwrite(data, 1, size, f) != size) {
        std::fclose(f);
        std::remove(tmp.c_str());
        throw DataError("short write: " + tmp);
    }
    if (std::fclose(f) != 0) {
        std::remove(tmp.c_str());
        throw DataError("cannot flush: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw DataError("cannot rename " + tmp + " -> " + path + ": " + ec.message());
    }
}

void atomic_write_file(const std::string& path, const std::string& text) {
    atomic_write_file(path, text.data(), text.size());
}

}  // namespace slidekit
