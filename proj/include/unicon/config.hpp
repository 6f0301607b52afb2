#pragma once

#include <map>
#include <string>
#include <vector>

#include "unicon/errors.hpp"

namespace unicon::config {

/// Flat key=value configuration with documented keys and defaults.
/// Files use `key = value` lines; `[section]` headers prefix the keys that
/// follow with `section.`. CLI overrides win over file values which win over
/// defaults. Unknown keys are rejected so every run stays reproducible from
/// its resolved dump.
class Config {
public:
    Config();  // defaults only

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);  // validates key
    void apply_overrides(const std::vector<std::string>& key_value_pairs);

    bool has(const std::string& key) const;
    std::string get(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::int64_t get_i64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;

    /// Full resolved view (defaults merged with everything set on top).
    std::map<std::string, std::string> resolved() const;
    void write_resolved(const std::string& path) const;

    static const std::map<std::string, std::string>& defaults();
    static const std::map<std::string, std::string>& docs();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace unicon::config
