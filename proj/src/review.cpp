#include "forge/review.hpp"

#include "forge/jsonl.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace forge {

using nlohmann::json;

std::string_view to_string(Decision d) {
    switch (d) {
    case Decision::accept: return "accept";
    case Decision::reject: return "reject";
    case Decision::edit: return "edit";
    }
    return "?";
}

Decision decision_from_string(std::string_view s) {
    if (s == "accept") return Decision::accept;
    if (s == "reject") return Decision::reject;
    if (s == "edit") return Decision::edit;
    throw InvalidVerdict("unknown decision: " + std::string(s));
}

json to_json(const ReviewVerdict& v) {
    json j = {{"seq", v.seq},
              {"pair_id", v.pair_id},
              {"decision", to_string(v.decision)},
              {"reviewer", v.reviewer},
              {"timestamp", v.timestamp}};
    if (v.edited_turns) j["edited_turns"] = turns_to_json(*v.edited_turns);
    return j;
}

ReviewVerdict verdict_from_json(const json& j) {
    if (!j.is_object()) throw InvalidVerdict("verdict must be a JSON object");
    ReviewVerdict v;
    try {
        v.pair_id = j.at("pair_id").get<std::string>();
        v.decision = decision_from_string(j.at("decision").get<std::string>());
        v.reviewer = j.value("reviewer", "");
        v.timestamp = j.value("timestamp", "");
        v.seq = j.value("seq", 0LL);
        if (auto it = j.find("edited_turns"); it != j.end() && !it->is_null()) v.edited_turns = turns_from_json(*it);
    } catch (const InvalidVerdict&) {
        throw;
    } catch (const std::exception& e) {
        throw InvalidVerdict(std::string("malformed verdict: ") + e.what());
    }
    return v;
}

namespace {

QAPair decided(const QAPair& p, const ReviewVerdict& v) {
    QAPair out = p;
    if (v.decision == Decision::edit) {
        out.turns = *v.edited_turns;
        out.review = ReviewState::edited;
    } else {
        out.review = v.decision == Decision::accept ? ReviewState::accepted : ReviewState::rejected;
    }
    return out;
}

void check_verdict(const ReviewVerdict& v, const QAPair& p) {
    if (v.decision == Decision::edit) {
        if (!v.edited_turns || v.edited_turns->empty()) throw InvalidVerdict("edit verdict for " + v.pair_id + " has no edited_turns");
        QAPair probe = p;
        probe.turns = *v.edited_turns;
        if (!well_formed(probe)) throw InvalidVerdict("edited_turns for " + v.pair_id + " do not alternate user/assistant");
    } else if (v.edited_turns) {
        throw InvalidVerdict("edited_turns given with decision " + std::string(to_string(v.decision)));
    }
}

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void fsync_dir(const std::filesystem::path& file) {
    auto dir = file.parent_path();
    if (dir.empty()) dir = ".";
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

void append_durably(const std::filesystem::path& path, const std::string& bytes) {
    const bool existed = std::filesystem::exists(path);
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw std::runtime_error("write to " + path.string() + " failed: " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const int err = errno;
        ::close(fd);
        throw std::runtime_error("fsync of " + path.string() + " failed: " + std::strerror(err));
    }
    ::close(fd);
    if (!existed) fsync_dir(path);
}

} // namespace

std::vector<QAPair> apply_verdicts(const std::vector<QAPair>& corpus, const std::vector<ReviewVerdict>& log) {
    std::unordered_map<std::string, const ReviewVerdict*> latest;
    for (const auto& v : log) latest[v.pair_id] = &v;
    std::vector<QAPair> out;
    for (const auto& p : corpus) {
        auto it = latest.find(p.pair_id);
        if (it == latest.end() || it->second->decision == Decision::reject) continue;
        out.push_back(decided(p, *it->second));
    }
    return out;
}

json ReviewStats::to_json() const {
    return {{"pending", pending},
            {"accepted", accepted},
            {"edited", edited},
            {"rejected", rejected},
            {"lint_pass_rate", linted ? double(lint_pass) / double(linted) : 1.0},
            {"linted", linted}};
}

ReviewStore::ReviewStore(std::vector<QAPair> corpus, std::vector<ScreenRecord> screens, std::filesystem::path log_path)
    : corpus_(std::move(corpus)), screens_(std::move(screens)), log_path_(std::move(log_path)) {
    for (std::size_t i = 0; i < corpus_.size(); ++i)
        if (!pair_index_.emplace(corpus_[i].pair_id, i).second)
            throw std::invalid_argument("duplicate pair id in corpus: " + corpus_[i].pair_id);
    for (std::size_t i = 0; i < screens_.size(); ++i) screen_index_.emplace(screens_[i].screen_id, i);
    live_.assign(corpus_.size(), std::nullopt);
    replay();
}

void ReviewStore::apply(const ReviewVerdict& v) {
    log_.push_back(v);
    next_seq_ = std::max(next_seq_, v.seq + 1);
    if (auto it = pair_index_.find(v.pair_id); it != pair_index_.end()) live_[it->second] = log_.size() - 1;
}

void ReviewStore::replay() {
    std::error_code ec;
    if (!std::filesystem::exists(log_path_, ec)) return;
    const std::string bytes = read_text_file(log_path_);
    std::size_t pos = 0, line_no = 0, good_end = 0;
    while (pos < bytes.size()) {
        const auto nl = bytes.find('\n', pos);
        const bool last = nl == std::string::npos;
        const std::string line = bytes.substr(pos, last ? std::string::npos : nl - pos);
        ++line_no;
        if (!line.empty()) {
            try {
                auto v = verdict_from_json(json::parse(line));
                if (v.seq <= 0) v.seq = next_seq_;
                apply(v);
                ++replayed_;
            } catch (const std::exception& e) {
                if (!last) throw std::runtime_error(log_path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
                torn_tail_ = true; // interrupted final append, never acknowledged
                break;
            }
        }
        if (last) {
            good_end = bytes.size();
            break;
        }
        pos = nl + 1;
        good_end = pos;
    }
    if (torn_tail_) {
        std::filesystem::resize_file(log_path_, good_end);
    } else if (!bytes.empty() && bytes.back() != '\n') {
        append_durably(log_path_, "\n");
    }
}

std::optional<PendingItem> ReviewStore::next_pending(std::optional<TaskKind> filter) const {
    std::shared_lock lk(mu_);
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
        if (live_[i] || (filter && corpus_[i].task != *filter)) continue;
        PendingItem item;
        item.pair = corpus_[i];
        item.screen = screen(item.pair.screen_id);
        if (item.screen) {
            FactsOptions fo;
            fo.compute_relations = false;
            item.facts = build_facts_from_disk(*item.screen, fo);
        }
        return item;
    }
    return std::nullopt;
}

ReviewVerdict ReviewStore::submit(ReviewVerdict v) {
    auto it = pair_index_.find(v.pair_id);
    if (it == pair_index_.end()) throw UnknownPair("unknown pair: " + v.pair_id);
    check_verdict(v, corpus_[it->second]);
    if (v.timestamp.empty()) v.timestamp = now_iso8601();

    std::lock_guard writer(write_mu_);
    {
        std::shared_lock lk(mu_);
        v.seq = next_seq_;
    }
    append_durably(log_path_, to_json(v).dump() + "\n");
    std::unique_lock lk(mu_);
    apply(v);
    return v;
}

std::vector<QAPair> ReviewStore::export_corpus() const {
    std::shared_lock lk(mu_);
    std::vector<QAPair> out;
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
        if (!live_[i]) continue;
        const auto& v = log_[*live_[i]];
        if (v.decision != Decision::reject) out.push_back(decided(corpus_[i], v));
    }
    return out;
}

ReviewStats ReviewStore::stats() const {
    std::shared_lock lk(mu_);
    ReviewStats s;
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
        if (!live_[i]) ++s.pending;
        else switch (log_[*live_[i]].decision) {
            case Decision::accept: ++s.accepted; break;
            case Decision::edit: ++s.edited; break;
            case Decision::reject: ++s.rejected; break;
            }
        if (corpus_[i].lint) {
            ++s.linted;
            if (corpus_[i].lint->pass) ++s.lint_pass;
        }
    }
    return s;
}

void ReviewStore::compact() {
    std::lock_guard writer(write_mu_);
    std::unique_lock lk(mu_);
    std::error_code ec;
    if (std::filesystem::exists(log_path_, ec)) {
        const std::string previous = read_text_file(log_path_);
        if (!previous.empty()) append_durably(std::filesystem::path(log_path_.string() + ".history"), previous);
    }
    std::vector<ReviewVerdict> kept;
    std::vector<std::optional<std::size_t>> live(corpus_.size());
    std::string snapshot;
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
        if (live_[i]) kept.push_back(log_[*live_[i]]);
    }
    std::sort(kept.begin(), kept.end(), [](const ReviewVerdict& a, const ReviewVerdict& b) { return a.seq < b.seq; });
    for (std::size_t k = 0; k < kept.size(); ++k) {
        live[pair_index_.at(kept[k].pair_id)] = k;
        snapshot += to_json(kept[k]).dump() + "\n";
    }
    write_file_atomic(log_path_, snapshot);
    log_ = std::move(kept);
    live_ = std::move(live);
}

const ScreenRecord* ReviewStore::screen(std::string_view screen_id) const {
    auto it = screen_index_.find(std::string(screen_id));
    return it == screen_index_.end() ? nullptr : &screens_[it->second];
}

std::vector<ReviewVerdict> ReviewStore::log() const {
    std::shared_lock lk(mu_);
    return log_;
}

} // namespace forge
