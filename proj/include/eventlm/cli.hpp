#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace eventlm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key = value settings. Config files use the same keys as the long
// flags (learning_rate, batch_size, max_epoch, ...); '#' starts a comment.
class Settings {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

    [[nodiscard]] std::string get(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;

    [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Throws UsageError on a malformed line or a key outside `allowed`.
[[nodiscard]] Settings parse_settings(const std::string& text, const std::vector<std::string>& allowed);
[[nodiscard]] Settings load_settings(const std::filesystem::path& path, const std::vector<std::string>& allowed);
[[nodiscard]] std::string serialize_settings(const Settings& s);

// Hex SHA-256 of a byte string.
[[nodiscard]] std::string sha256_hex(const std::string& bytes);

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace eventlm::cli
