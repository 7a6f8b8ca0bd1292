#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "nxtp/errors.hpp"

namespace nxtp {

// Write via temp file + rename so readers never see partial output.
inline void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& writer) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write file: " + path);
        writer(out);
        out.flush();
        if (!out) throw DataError("write failed: " + path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("rename failed for " + path + ": " + ec.message());
}

} // namespace nxtp
