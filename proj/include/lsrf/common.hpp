#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lsrf {

// Thrown when a configuration or argument set is rejected. Collects every
// violation found, not just the first.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(std::vector<std::string> issues)
        : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

    const std::vector<std::string>& issues() const { return issues_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) out += "; ";
            out += v[i];
        }
        return out.empty() ? std::string("invalid input") : out;
    }
    std::vector<std::string> issues_;
};

// Accumulates validation failures so callers can report them all at once.
class issue_list {
public:
    void require(bool ok, const std::string& msg) {
        if (!ok) issues_.push_back(msg);
    }
    void add(const std::string& msg) { issues_.push_back(msg); }
    bool empty() const { return issues_.empty(); }
    const std::vector<std::string>& issues() const { return issues_; }
    // Throws validation_error if any issue was recorded.
    void check() const {
        if (!issues_.empty()) throw validation_error(issues_);
    }

private:
    std::vector<std::string> issues_;
};

// Fixed 17-significant-digit formatting; round-trips any double exactly.
inline std::string format17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

inline int default_thread_count() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Runs fn(begin, end) over contiguous chunks of [0, count) on up to `threads`
// threads. Chunk boundaries depend only on (count, threads); callers must keep
// per-index outputs independent so results do not depend on scheduling.
inline void parallel_for(int64_t count, int threads,
                         const std::function<void(int64_t, int64_t)>& fn) {
    if (count <= 0) return;
    int nt = threads < 1 ? 1 : threads;
    if (static_cast<int64_t>(nt) > count) nt = static_cast<int>(count);
    if (nt == 1) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    int64_t chunk = (count + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        int64_t b = t * chunk;
        int64_t e = b + chunk < count ? b + chunk : count;
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

} // namespace lsrf
