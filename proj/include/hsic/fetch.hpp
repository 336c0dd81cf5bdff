#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

// glibc's <resolv.h> (pulled in via the socket headers above) defines
// `_res` as a macro, which mangles unrelated code compiled after this
// header (Eigen uses `_res` as a parameter name).
#ifdef _res
#undef _res
#endif

#include <openssl/evp.h>
#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hsic/errors.hpp"

namespace hsic {

struct DownloadSpec {
    std::string url;
    std::string filename;   // name inside the cache directory
    std::string sha256;     // empty = record only, no verification
};

/// One entry per dataset file the experiments need. Checksums are left
/// empty by default and can be pinned in the experiment config; when
/// pinned, a mismatch is a hard error.
inline std::vector<DownloadSpec> default_downloads() {
    return {
        {"https://archive.ics.uci.edu/static/public/275/bike+sharing+dataset.zip",
         "bike-sharing-dataset.zip", ""},
        {"https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz",
         "train-images-idx3-ubyte.gz", ""},
        {"https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz",
         "train-labels-idx1-ubyte.gz", ""},
        {"https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz",
         "t10k-images-idx3-ubyte.gz", ""},
        {"https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz",
         "t10k-labels-idx1-ubyte.gz", ""},
    };
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw NumericalError("sha256_hex: digest failure");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("sha256_file: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

namespace detail {

inline std::string inflate_raw(const unsigned char* data, std::size_t compressed_size,
                               std::size_t expected_size) {
    std::string out(expected_size, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK) throw ParseError("inflate_raw: init failed");
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(compressed_size);
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected_size)
        throw ParseError("inflate_raw: corrupt deflate stream");
    return out;
}

inline std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

} // namespace detail

/// Minimal zip extraction (stored and deflate entries) driven by the
/// end-of-central-directory record. Returns filename -> contents.
inline std::map<std::string, std::string> unzip_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("unzip_all: cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 22) throw ParseError("unzip_all: file too small: " + path.string());

    // Locate EOCD (signature 0x06054b50), searching back over the comment.
    std::size_t eocd = std::string::npos;
    for (std::size_t i = buf.size() - 22 + 1; i-- > 0;) {
        if (buf[i] == 0x50 && buf[i + 1] == 0x4b && buf[i + 2] == 0x05 &&
            buf[i + 3] == 0x06) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string::npos)
        throw ParseError("unzip_all: no end-of-central-directory in " + path.string());

    const std::uint16_t entry_count = detail::le16(&buf[eocd + 10]);
    std::size_t cd = detail::le32(&buf[eocd + 16]);

    std::map<std::string, std::string> files;
    for (std::uint16_t e = 0; e < entry_count; ++e) {
        if (cd + 46 > buf.size() || detail::le32(&buf[cd]) != 0x02014b50)
            throw ParseError("unzip_all: corrupt central directory in " + path.string());
        const std::uint16_t method = detail::le16(&buf[cd + 10]);
        const std::uint32_t comp_size = detail::le32(&buf[cd + 20]);
        const std::uint32_t uncomp_size = detail::le32(&buf[cd + 24]);
        const std::uint16_t name_len = detail::le16(&buf[cd + 28]);
        const std::uint16_t extra_len = detail::le16(&buf[cd + 30]);
        const std::uint16_t comment_len = detail::le16(&buf[cd + 32]);
        const std::uint32_t local_off = detail::le32(&buf[cd + 42]);
        std::string name(reinterpret_cast<const char*>(&buf[cd + 46]), name_len);
        cd += 46u + name_len + extra_len + comment_len;

        if (local_off + 30 > buf.size() || detail::le32(&buf[local_off]) != 0x04034b50)
            throw ParseError("unzip_all: corrupt local header for " + name);
        const std::uint16_t lname_len = detail::le16(&buf[local_off + 26]);
        const std::uint16_t lextra_len = detail::le16(&buf[local_off + 28]);
        const std::size_t data_off = local_off + 30u + lname_len + lextra_len;
        if (data_off + comp_size > buf.size())
            throw ParseError("unzip_all: truncated entry " + name);

        if (name.empty() || name.back() == '/') continue; // directory entry
        if (method == 0) {
            files[name] = std::string(reinterpret_cast<const char*>(&buf[data_off]),
                                      comp_size);
        } else if (method == 8) {
            files[name] = detail::inflate_raw(&buf[data_off], comp_size, uncomp_size);
        } else {
            throw ParseError("unzip_all: unsupported compression method for " + name);
        }
    }
    return files;
}

/// Decompress a gzip file to a sibling path without the .gz suffix.
inline std::string gunzip_file(const std::filesystem::path& path) {
    gzFile gz = gzopen(path.string().c_str(), "rb");
    if (!gz) throw ParseError("gunzip_file: cannot open " + path.string());
    std::string out;
    char chunk[1 << 16];
    int got;
    while ((got = gzread(gz, chunk, sizeof(chunk))) > 0)
        out.append(chunk, static_cast<std::size_t>(got));
    const bool ok = got == 0;
    gzclose(gz);
    if (!ok) throw ParseError("gunzip_file: corrupt gzip stream in " + path.string());
    return out;
}

/// Download every dataset file into `cache_dir`, verify pinned checksums,
/// and unpack (hour.csv out of the bike zip, .gz MNIST files to raw IDX).
/// Idempotent: files already unpacked are not re-fetched.
inline void fetch_data(const std::filesystem::path& cache_dir,
                       std::vector<DownloadSpec> downloads = default_downloads(),
                       std::ostream& log = std::cerr) {
    std::filesystem::create_directories(cache_dir);

    auto unpacked_name = [](const std::string& archive) -> std::string {
        if (archive.ends_with(".zip")) return "hour.csv";
        if (archive.ends_with(".gz")) return archive.substr(0, archive.size() - 3);
        return archive;
    };

    for (const auto& d : downloads) {
        const auto archive_path = cache_dir / d.filename;
        const auto final_path = cache_dir / unpacked_name(d.filename);
        if (std::filesystem::exists(final_path)) {
            log << "fetch: " << final_path.string() << " already present, skipping\n";
            continue;
        }

        if (!std::filesystem::exists(archive_path)) {
            const auto scheme_end = d.url.find("://");
            if (scheme_end == std::string::npos)
                throw ParseError("fetch_data: bad url " + d.url);
            const auto host_start = scheme_end + 3;
            const auto path_start = d.url.find('/', host_start);
            const std::string origin = d.url.substr(0, path_start);
            const std::string path =
                path_start == std::string::npos ? "/" : d.url.substr(path_start);
            log << "fetch: downloading " << d.url << "\n";
            httplib::Client client(origin);
            client.set_follow_location(true);
            client.set_read_timeout(120, 0);
            auto res = client.Get(path);
            if (!res || res->status != 200)
                throw ParseError("fetch_data: download failed for " + d.url +
                                 (res ? " (status " + std::to_string(res->status) + ")"
                                      : " (no response)"));
            std::ofstream out(archive_path, std::ios::binary);
            out << res->body;
        }

        const std::string digest = sha256_file(archive_path);
        if (!d.sha256.empty() && digest != d.sha256) {
            std::filesystem::remove(archive_path);
            throw ParseError("fetch_data: checksum mismatch for " + d.filename +
                             " (got " + digest + ", expected " + d.sha256 + ")");
        }
        log << "fetch: " << d.filename << " sha256=" << digest << "\n";

        if (d.filename.ends_with(".zip")) {
            auto files = unzip_all(archive_path);
            if (!files.count("hour.csv"))
                throw ParseError("fetch_data: hour.csv missing from " + d.filename);
            std::ofstream out(final_path, std::ios::binary);
            out << files.at("hour.csv");
        } else if (d.filename.ends_with(".gz")) {
            std::ofstream out(final_path, std::ios::binary);
            out << gunzip_file(archive_path);
        }
        log << "fetch: unpacked " << final_path.string() << "\n";
    }
}

} // namespace hsic
