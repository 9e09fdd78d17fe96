#pragma once
#include <string>
#include <vector>

namespace credlab::csv {

struct Document {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Comma separator, '.' decimal point, first row is the header, UTF-8.
Document read_file(const std::string& path);

// Shortest round-trip representation (std::to_chars), so emit/ingest is lossless.
std::string format_double(double v);

class Writer {
public:
    explicit Writer(const std::string& path);
    ~Writer();
    Writer(const Writer&) = delete;
    Writer& operator=(const Writer&) = delete;

    void write_row(const std::vector<std::string>& cells);

private:
    struct Impl;
    Impl* impl_;
};

}  // namespace credlab::csv
