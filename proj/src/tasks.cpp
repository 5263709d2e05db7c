#include "spv/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>

#include "spv/error.hpp"
#include "spv/implant.hpp"

namespace spv::tasks {

std::string to_string(Task t) { return t == Task::Letter ? "letter" : "hallway"; }
std::string to_string(Display d) { return d == Display::Monitor ? "monitor" : "hmd"; }

Task parse_task(const std::string& s) {
    if (s == "letter") return Task::Letter;
    if (s == "hallway") return Task::Hallway;
    throw ConfigError("unknown task '" + s + "' (expected letter or hallway)");
}

Display parse_display(const std::string& s) {
    if (s == "monitor") return Display::Monitor;
    if (s == "hmd") return Display::Hmd;
    throw ConfigError("unknown display '" + s + "' (expected monitor or hmd)");
}

void Condition::validate() const {
    const auto& names = implant::preset_names();
    if (std::find(names.begin(), names.end(), device) == names.end())
        throw ConfigError("unknown device '" + device + "'");
    if (!(rho_um > 0.0) || !std::isfinite(rho_um)) throw ConfigError("rho must be positive");
    if (!(lambda_um > 0.0) || !std::isfinite(lambda_um)) throw ConfigError("lambda must be positive");
}

bool Condition::on_grid() const {
    return std::find(kRhoValues.begin(), kRhoValues.end(), rho_um) != kRhoValues.end() &&
           std::find(kLambdaValues.begin(), kLambdaValues.end(), lambda_um) != kLambdaValues.end();
}

std::vector<Condition> all_conditions(Display display) {
    std::vector<Condition> out;
    for (const auto& dev : implant::preset_names())
        for (double rho : kRhoValues)
            for (double lam : kLambdaValues) out.push_back({dev, rho, lam, display});
    return out;
}

std::uint64_t Rng::index(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::index needs n > 0");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return v % n;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finaliser over a stream-offset state
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::vector<Condition> block_schedule(std::uint64_t seed, Task task, Display display) {
    auto conds = all_conditions(display);
    const Condition first{"argus4h", 100.0, 50.0, display};
    conds.erase(std::find(conds.begin(), conds.end(), first));
    Rng rng(derive_seed(seed, task == Task::Letter ? 1 : 2));
    rng.shuffle(conds);
    conds.insert(conds.begin(), first);
    return conds;
}

// ---------------------------------------------------------------- letters

bool is_test_letter(char c) { return std::find(kLetters.begin(), kLetters.end(), c) != kLetters.end(); }

double score_block(const std::vector<std::pair<char, char>>& responses) {
    if (responses.empty()) throw ContractError("score_block needs at least one response");
    std::set<char> classes;
    for (const auto& [truth, pred] : responses) {
        if (!is_test_letter(truth)) throw ContractError(std::string("truth label '") + truth + "' is not a test letter");
        if (!is_test_letter(pred) && pred != kTimeoutLabel)
            throw ContractError(std::string("predicted label '") + pred + "' is not a test letter");
        classes.insert(truth);
        if (pred != kTimeoutLabel) classes.insert(pred);
    }
    double sum = 0.0;
    for (char c : classes) {
        int tp = 0, fp = 0, fn = 0;
        for (const auto& [truth, pred] : responses) {
            if (truth == c && pred == c) ++tp;
            else if (pred == c) ++fp;
            else if (truth == c) ++fn;
        }
        const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return sum / static_cast<double>(classes.size());
}

namespace {

using Glyph = std::array<std::uint8_t, 25>;

// clang-format off
const std::map<char, Glyph>& glyph_table() {
    static const std::map<char, Glyph> table = {
        {'C', {0,1,1,1,0, 1,0,0,0,1, 1,0,0,0,0, 1,0,0,0,1, 0,1,1,1,0}},
        {'D', {1,1,1,1,0, 1,0,0,0,1, 1,0,0,0,1, 1,0,0,0,1, 1,1,1,1,0}},
        {'E', {1,1,1,1,1, 1,0,0,0,0, 1,1,1,1,0, 1,0,0,0,0, 1,1,1,1,1}},
        {'F', {1,1,1,1,1, 1,0,0,0,0, 1,1,1,1,0, 1,0,0,0,0, 1,0,0,0,0}},
        {'L', {1,0,0,0,0, 1,0,0,0,0, 1,0,0,0,0, 1,0,0,0,0, 1,1,1,1,1}},
        {'O', {0,1,1,1,0, 1,0,0,0,1, 1,0,0,0,1, 1,0,0,0,1, 0,1,1,1,0}},
        {'P', {1,1,1,1,0, 1,0,0,0,1, 1,1,1,1,0, 1,0,0,0,0, 1,0,0,0,0}},
        {'T', {1,1,1,1,1, 0,0,1,0,0, 0,0,1,0,0, 0,0,1,0,0, 0,0,1,0,0}},
        {'Z', {1,1,1,1,1, 0,0,0,1,0, 0,0,1,0,0, 0,1,0,0,0, 1,1,1,1,1}},
        {'Q', {0,1,1,1,0, 1,0,0,0,1, 1,0,0,0,1, 1,0,0,1,0, 0,1,1,0,1}},
        {'I', {0,1,1,1,0, 0,0,1,0,0, 0,0,1,0,0, 0,0,1,0,0, 0,1,1,1,0}},
        {'N', {1,0,0,0,1, 1,1,0,0,1, 1,0,1,0,1, 1,0,0,1,1, 1,0,0,0,1}},
    };
    return table;
}
// clang-format on

}  // namespace

const Glyph& glyph(char letter) {
    const auto& t = glyph_table();
    const auto it = t.find(letter);
    if (it == t.end()) throw ContractError(std::string("no glyph for '") + letter + "'");
    return it->second;
}

Frame render_letter(char letter, int width, int height, const retina::FieldWindow& window, double height_deg) {
    if (width < 2 || height < 2) throw ContractError("letter frame must be at least 2x2");
    if (!(height_deg > 0.0)) throw ContractError("letter height must be positive");
    const auto& g = glyph(letter);
    Frame f(width, height);
    const double az_c = 0.5 * (window.az_min + window.az_max);
    const double el_c = 0.5 * (window.el_min + window.el_max);
    const double left = az_c - height_deg / 2, top = el_c + height_deg / 2;
    for (int j = 0; j < height; ++j) {
        const double el = window.el_max - j * (window.el_max - window.el_min) / (height - 1);
        const double v = (top - el) / height_deg * 5.0;
        if (v < 0.0 || v >= 5.0) continue;
        for (int i = 0; i < width; ++i) {
            const double az = window.az_min + i * (window.az_max - window.az_min) / (width - 1);
            const double u = (az - left) / height_deg * 5.0;
            if (u < 0.0 || u >= 5.0) continue;
            if (g[static_cast<int>(v) * 5 + static_cast<int>(u)]) f.at(i, j) = 1.0f;
        }
    }
    return f;
}

LetterResponse resolve_letter_response(char choice, double elapsed_s) {
    if (!is_test_letter(choice)) throw ContractError(std::string("'") + choice + "' is not a test letter");
    if (!(elapsed_s > 0.0)) throw ContractError("response time must be positive");
    if (elapsed_s >= kTrialTimeLimitS) return {choice, kTrialTimeLimitS, true};
    return {choice, elapsed_s, false};
}

// ---------------------------------------------------------------- hallway

std::string HallwayWorld::descriptor() const {
    std::string s;
    for (const auto& o : obstacles) {
        if (!s.empty()) s += '-';
        s += o.side < 0 ? 'L' : 'R';
        s += std::to_string(static_cast<int>(std::lround(kObstacleRowsM[o.row] / kFeet)));
    }
    return s;
}

HallwayWorld make_hallway(std::uint64_t seed, int n_obstacles, Display layout) {
    if (n_obstacles != 2 && n_obstacles != 3) throw ContractError("a hallway trial has 2 or 3 obstacles");
    Rng rng(seed);
    HallwayWorld w;
    w.start_y = layout == Display::Monitor ? kMonitorStartM : kHmdStartM;
    const int skipped = n_obstacles == 3 ? -1 : static_cast<int>(rng.index(3));
    for (int row = 0; row < 3; ++row) {
        if (row == skipped) continue;
        Obstacle o;
        o.id = static_cast<int>(w.obstacles.size());
        o.row = row;
        o.side = rng.index(2) == 0 ? -1 : 1;
        o.box.cx = o.side * kSlotOffsetM;
        o.box.cy = kObstacleRowsM[row];
        w.obstacles.push_back(o);
    }
    return w;
}

namespace {

double wrap_degrees(double a) {
    a = std::fmod(a, 360.0);
    if (a > 180.0) a -= 360.0;
    if (a <= -180.0) a += 360.0;
    return a;
}

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

AgentState step_agent(const AgentState& s, const AgentInput& in, double dt, const HallwayWorld& world, double speed) {
    if (!(dt > 0.0 && dt <= 0.1)) throw ContractError("step dt must lie in (0, 0.1] s");
    AgentState n = s;
    if (in.forward) {
        const double psi = s.yaw_deg * kDegToRad;
        n.x += speed * dt * std::sin(psi);
        n.y += speed * dt * std::cos(psi);
    }
    const double xmax = world.width / 2 - world.agent_radius;
    n.x = std::clamp(n.x, -xmax, xmax);
    n.y = std::clamp(n.y, world.agent_radius, world.length - world.agent_radius);
    n.yaw_deg = wrap_degrees(s.yaw_deg + in.yaw_rate_deg_s * dt);
    n.t = s.t + dt;
    return n;
}

double box_distance(const Box& b, double x, double y) {
    const double dx = std::max(std::abs(x - b.cx) - b.half_x, 0.0);
    const double dy = std::max(std::abs(y - b.cy) - b.half_y, 0.0);
    return std::hypot(dx, dy);
}

namespace {

/// Entry parameter of the segment a + s*d into an axis-aligned rectangle.
std::optional<double> slab_entry(double ax, double ay, double dx, double dy, double x0, double x1, double y0,
                                 double y1) {
    double lo = 0.0, hi = 1.0;
    auto clip = [&](double a, double d, double mn, double mx) {
        if (d == 0.0) return a >= mn && a <= mx;
        double s0 = (mn - a) / d, s1 = (mx - a) / d;
        if (s0 > s1) std::swap(s0, s1);
        lo = std::max(lo, s0);
        hi = std::min(hi, s1);
        return lo <= hi;
    };
    if (!clip(ax, dx, x0, x1) || !clip(ay, dy, y0, y1)) return std::nullopt;
    return lo;
}

std::optional<double> circle_entry(double ax, double ay, double dx, double dy, double cx, double cy, double r) {
    const double fx = ax - cx, fy = ay - cy;
    const double c = fx * fx + fy * fy - r * r;
    if (c <= 0.0) return 0.0;
    const double a = dx * dx + dy * dy;
    if (a == 0.0) return std::nullopt;
    const double b = fx * dx + fy * dy;
    const double disc = b * b - a * c;
    if (disc < 0.0 || b >= 0.0) return std::nullopt;
    const double s = (-b - std::sqrt(disc)) / a;
    if (s > 1.0) return std::nullopt;
    return std::max(s, 0.0);
}

}  // namespace

std::optional<double> sweep_disc_box(const Box& b, double r, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    std::optional<double> best;
    auto keep = [&](std::optional<double> s) {
        if (s && (!best || *s < *best)) best = s;
    };
    // Minkowski sum of the box and the disc: two crossed slabs plus corner discs.
    keep(slab_entry(ax, ay, dx, dy, b.cx - b.half_x - r, b.cx + b.half_x + r, b.cy - b.half_y, b.cy + b.half_y));
    keep(slab_entry(ax, ay, dx, dy, b.cx - b.half_x, b.cx + b.half_x, b.cy - b.half_y - r, b.cy + b.half_y + r));
    for (int sx : {-1, 1})
        for (int sy : {-1, 1})
            keep(circle_entry(ax, ay, dx, dy, b.cx + sx * b.half_x, b.cy + sy * b.half_y, r));
    return best;
}

std::vector<CollisionEvent> detect_collision(const std::vector<PathSample>& path, const HallwayWorld& world) {
    for (std::size_t i = 1; i < path.size(); ++i)
        if (path[i].t < path[i - 1].t) throw ContractError("path timestamps must be non-decreasing");
    std::vector<CollisionEvent> events;
    if (path.empty()) return events;
    for (const auto& o : world.obstacles) {
        std::optional<double> hit;
        if (box_distance(o.box, path[0].x, path[0].y) <= world.agent_radius) hit = path[0].t;
        for (std::size_t i = 1; i < path.size() && !hit; ++i) {
            const auto& a = path[i - 1];
            const auto& b = path[i];
            if (const auto s = sweep_disc_box(o.box, world.agent_radius, a.x, a.y, b.x, b.y))
                hit = a.t + *s * (b.t - a.t);
        }
        if (hit) events.push_back({o.id, *hit});
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const CollisionEvent& a, const CollisionEvent& b) { return a.t < b.t; });
    return events;
}

PolicyKind parse_policy(const std::string& s) {
    if (s == "straight") return PolicyKind::Straight;
    if (s == "greedy") return PolicyKind::Greedy;
    if (s == "replay") return PolicyKind::Replay;
    throw ConfigError("unknown hallway policy '" + s + "' (expected straight, greedy or replay)");
}

AgentInput greedy_input(const AgentState& s, const HallwayWorld& world) {
    constexpr double kLookahead = 0.35;
    constexpr double kGain = 10.0;
    constexpr double kMaxRate = 270.0;
    constexpr double kGuard = 0.02;
    const double r = world.agent_radius;
    const Obstacle* next = nullptr;
    for (const auto& o : world.obstacles)
        if (o.box.cy + o.box.half_y + r > s.y && (next == nullptr || o.box.cy < next->box.cy)) next = &o;

    double target = s.x;
    if (next != nullptr) {
        // Centre of the free lane on the far side of the hallway.
        const double wall = world.width / 2 - r;
        const double inner = std::abs(next->box.cx) - next->box.half_x - r;
        target = next->side * 0.5 * (inner - wall);
    }
    const double desired = std::atan2(target - s.x, kLookahead) / kDegToRad;
    AgentInput in;
    in.yaw_rate_deg_s = std::clamp(kGain * wrap_degrees(desired - s.yaw_deg), -kMaxRate, kMaxRate);
    in.forward = true;
    if (next != nullptr) {
        const double psi = s.yaw_deg * kDegToRad;
        const double nx = s.x + kWalkSpeed * kTickS * std::sin(psi);
        const double ny = s.y + kWalkSpeed * kTickS * std::cos(psi);
        const double now = box_distance(next->box, s.x, s.y);
        const double then = box_distance(next->box, nx, ny);
        if (then <= r + kGuard && then < now) in.forward = false;
    }
    return in;
}

bool TrialRecord::same_row(const TrialRecord& o) const {
    return task == o.task && block == o.block && condition == o.condition && trial == o.trial &&
           stimulus == o.stimulus && response == o.response && correct == o.correct && collisions == o.collisions &&
           time_s == o.time_s && seed == o.seed;
}

TrialRecord run_headless_trial(const HallwayWorld& world, const Policy& policy, const Condition& condition) {
    TrialRecord rec;
    rec.task = Task::Hallway;
    rec.condition = condition;
    rec.stimulus = world.descriptor();

    if (policy.kind == PolicyKind::Replay) {
        for (const auto& p : policy.replay) {
            if (p.t > kTrialTimeLimitS) {
                if (!rec.path.empty() && rec.path.back().t < kTrialTimeLimitS) {
                    const auto& a = rec.path.back();
                    const double f = (kTrialTimeLimitS - a.t) / (p.t - a.t);
                    rec.path.push_back({kTrialTimeLimitS, a.x + f * (p.x - a.x), a.y + f * (p.y - a.y), a.yaw_deg});
                }
                break;
            }
            rec.path.push_back(p);
        }
    } else {
        AgentState s{0.0, 0.0, world.start_y, 0.0};
        rec.path.push_back({s.t, s.x, s.y, s.yaw_deg});
        const auto max_steps = static_cast<long>(std::lround(kTrialTimeLimitS / kTickS));
        for (long k = 1; k <= max_steps; ++k) {
            const AgentInput in = policy.kind == PolicyKind::Straight ? AgentInput{true, 0.0} : greedy_input(s, world);
            AgentState n = step_agent(s, in, kTickS, world);
            n.t = static_cast<double>(k) * kTickS;
            if (n.y >= world.finish_y && s.y < world.finish_y) {
                const double f = (world.finish_y - s.y) / (n.y - s.y);
                rec.path.push_back({s.t + f * (n.t - s.t), s.x + f * (n.x - s.x), world.finish_y,
                                    s.yaw_deg});
                break;
            }
            rec.path.push_back({n.t, n.x, n.y, n.yaw_deg});
            s = n;
        }
    }
    rec.events = detect_collision(rec.path, world);
    rec.collisions = static_cast<int>(rec.events.size());
    rec.time_s = rec.path.empty() ? 0.0 : rec.path.back().t;
    return rec;
}

LetterPolicy parse_letter_policy(const std::string& s) {
    if (s == "random") return LetterPolicy::Random;
    if (s == "perfect") return LetterPolicy::Perfect;
    throw ConfigError("unknown letter policy '" + s + "' (expected random or perfect)");
}

std::vector<TrialRecord> run_experiment(const ExperimentOptions& opts) {
    const auto schedule = block_schedule(opts.seed, opts.task, opts.display);
    std::vector<TrialRecord> out;
    int trial = 0;
    if (opts.task == Task::Letter) {
        const auto policy = parse_letter_policy(opts.policy.empty() ? "random" : opts.policy);
        for (std::size_t b = 0; b < schedule.size(); ++b) {
            Rng order(derive_seed(opts.seed, 100 + b));
            std::vector<char> letters(kLetters.begin(), kLetters.end());
            order.shuffle(letters);
            // A chance responder names a different letter on every trial.
            std::vector<char> guesses(kLetters.begin(), kLetters.end());
            order.shuffle(guesses);
            for (std::size_t i = 0; i < letters.size(); ++i, ++trial) {
                const std::uint64_t seed = derive_seed(opts.seed, 1000 + static_cast<std::uint64_t>(trial));
                Rng rng(seed);
                const char choice = policy == LetterPolicy::Perfect ? letters[i] : guesses[i];
                const double elapsed = policy == LetterPolicy::Perfect ? rng.uniform(1.0, 5.0) : rng.uniform(1.0, 20.0);
                const auto resp = resolve_letter_response(choice, elapsed);
                TrialRecord r;
                r.task = Task::Letter;
                r.block = static_cast<int>(b);
                r.condition = schedule[b];
                r.trial = trial;
                r.stimulus = std::string(1, letters[i]);
                r.response = std::string(1, resp.response);
                r.correct = resp.response == letters[i];
                r.time_s = resp.time_s;
                r.seed = seed;
                out.push_back(std::move(r));
            }
        }
        return out;
    }

    Policy policy{parse_policy(opts.policy.empty() ? "greedy" : opts.policy), {}};
    if (policy.kind == PolicyKind::Replay) throw ConfigError("replay needs a recorded path, not a session");
    for (std::size_t b = 0; b < schedule.size(); ++b) {
        Rng order(derive_seed(opts.seed, 100 + b));
        std::vector<int> counts = {2, 2, 2, 3, 3, 3};
        order.shuffle(counts);
        for (int n : counts) {
            const std::uint64_t seed = derive_seed(opts.seed, 1000 + static_cast<std::uint64_t>(trial));
            auto rec = run_headless_trial(make_hallway(seed, n, opts.display), policy, schedule[b]);
            rec.block = static_cast<int>(b);
            rec.trial = trial++;
            rec.seed = seed;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<double> block_scores(const std::vector<TrialRecord>& records) {
    std::map<int, std::vector<std::pair<char, char>>> blocks;
    for (const auto& r : records) {
        if (r.task != Task::Letter) continue;
        if (r.stimulus.size() != 1 || r.response.size() != 1)
            throw ContractError("letter record " + std::to_string(r.trial) + " needs one-letter fields");
        const char pred = r.time_s >= kTrialTimeLimitS ? kTimeoutLabel : r.response[0];
        blocks[r.block].emplace_back(r.stimulus[0], pred);
    }
    std::vector<double> scores;
    for (const auto& [b, resp] : blocks) scores.push_back(score_block(resp));
    return scores;
}

}  // namespace spv::tasks
