#include "needleforge/io_util.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "needleforge/errors.hpp"

namespace needleforge {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw DataError("read failed: " + path);
    return buf.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw DataError("cannot create directory " + target.parent_path().string() +
                                ": " + ec.message());
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open file for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw DataError("write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw DataError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace needleforge
