#include "solarst/csv_io.hpp"

#include "solarst/error.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace solarst {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view text, std::string_view what)
{
    text = trim(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error("cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

int parse_digits(std::string_view text, std::size_t pos, std::size_t len)
{
    if (pos + len > text.size())
        throw Error("truncated ISO-8601 timestamp '" + std::string(text) + "'");
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc() || ptr != text.data() + pos + len)
        throw Error("malformed ISO-8601 timestamp '" + std::string(text) + "'");
    return v;
}

double parse_iso8601(std::string_view text)
{
    // YYYY-MM-DDTHH:MM:SS
    if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
        text[13] != ':' || text[16] != ':')
        throw Error("malformed ISO-8601 timestamp '" + std::string(text) + "'");
    using namespace std::chrono;
    const year_month_day ymd{year{parse_digits(text, 0, 4)}, month{static_cast<unsigned>(parse_digits(text, 5, 2))},
                             day{static_cast<unsigned>(parse_digits(text, 8, 2))}};
    if (!ymd.ok())
        throw Error("invalid calendar date in '" + std::string(text) + "'");
    const int hh = parse_digits(text, 11, 2);
    const int mm = parse_digits(text, 14, 2);
    const int ss = parse_digits(text, 17, 2);
    if (hh > 23 || mm > 59 || ss > 60)
        throw Error("invalid time of day in '" + std::string(text) + "'");

    std::size_t pos = 19;
    double fraction = 0.0;
    if (pos < text.size() && text[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < text.size() && text[end] >= '0' && text[end] <= '9')
            ++end;
        fraction = parse_double(text.substr(pos, end - pos), "fractional seconds");
        pos = end;
    }
    int offset_seconds = 0;
    if (pos < text.size()) {
        if (text[pos] == 'Z' && pos + 1 == text.size()) {
            // UTC
        } else if ((text[pos] == '+' || text[pos] == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
            const int sign = text[pos] == '+' ? 1 : -1;
            offset_seconds = sign * (parse_digits(text, pos + 1, 2) * 3600 + parse_digits(text, pos + 4, 2) * 60);
        } else {
            throw Error("malformed ISO-8601 zone in '" + std::string(text) + "'");
        }
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss + fraction -
           static_cast<double>(offset_seconds);
}

std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    return out;
}

} // namespace

std::string format_number(double value)
{
    if (std::isnan(value))
        return "NA";
    if (value == 0.0)
        return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc())
        throw Error("number formatting failed");
    return std::string(buf, ptr);
}

double parse_timestamp(std::string_view text)
{
    text = trim(text);
    if (text.empty())
        throw Error("empty timestamp");
    if (text.size() >= 10 && text[4] == '-')
        return parse_iso8601(text);
    return parse_double(text, "timestamp");
}

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return cells;
}

std::vector<Measurement> read_measurements_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw Error("empty input: measurements file has no header");
    const auto header = split_csv_line(line);
    const bool has_missing_column = header.size() == 4 && header[3] == "missing";
    if (header.size() < 3 || header[0] != "timestamp" || header[1] != "sensor_id" || header[2] != "value" ||
        (header.size() == 4 && !has_missing_column) || header.size() > 4)
        throw Error("measurements header must be 'timestamp,sensor_id,value[,missing]'");

    std::vector<Measurement> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " columns");
        Measurement m;
        m.timestamp = parse_timestamp(cells[0]);
        m.sensor_id = cells[1];
        bool missing = cells[2].empty() || cells[2] == "NA" || cells[2] == "NaN" || cells[2] == "nan";
        if (has_missing_column) {
            if (cells[3] == "1")
                missing = true;
            else if (cells[3] != "0" && !cells[3].empty())
                throw Error("line " + std::to_string(line_no) + ": missing flag must be 0 or 1");
        }
        if (!missing)
            m.value = parse_double(cells[2], "value");
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Measurement> read_measurements_csv(const std::string& path)
{
    auto in = open_input(path);
    return read_measurements_csv(in);
}

void write_measurements_csv(std::ostream& out, const SpatioTemporalField& field)
{
    out << "timestamp,sensor_id,value\n";
    for (const Measurement& m : to_measurements(field))
        out << format_number(m.timestamp) << ',' << m.sensor_id << ','
            << (m.value ? format_number(*m.value) : std::string("NA")) << '\n';
}

void write_measurements_csv(const std::string& path, const SpatioTemporalField& field)
{
    auto out = open_output(path);
    write_measurements_csv(out, field);
}

SensorLayout read_layout_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw Error("layout file is empty");
    const auto header = split_csv_line(line);
    if (header.size() != 3 || header[0] != "sensor_id" || header[1] != "x_m" || header[2] != "y_m")
        throw Error("layout header must be 'sensor_id,x_m,y_m'");
    std::vector<Sensor> sensors;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 3)
            throw Error("layout line " + std::to_string(line_no) + ": expected 3 columns");
        sensors.push_back({cells[0], parse_double(cells[1], "x_m"), parse_double(cells[2], "y_m")});
    }
    return SensorLayout(std::move(sensors));
}

SensorLayout read_layout_csv(const std::string& path)
{
    auto in = open_input(path);
    return read_layout_csv(in);
}

void write_layout_csv(std::ostream& out, const SensorLayout& layout)
{
    out << "sensor_id,x_m,y_m\n";
    for (const Sensor& s : layout.sensors())
        out << s.id << ',' << format_number(s.x) << ',' << format_number(s.y) << '\n';
}

void write_layout_csv(const std::string& path, const SensorLayout& layout)
{
    auto out = open_output(path);
    write_layout_csv(out, layout);
}

} // namespace solarst
