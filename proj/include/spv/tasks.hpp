#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spv/frame.hpp"
#include "spv/retina.hpp"

namespace spv::tasks {

enum class Task { Letter, Hallway };
enum class Display { Monitor, Hmd };

std::string to_string(Task t);
std::string to_string(Display d);
Task parse_task(const std::string& s);
Display parse_display(const std::string& s);

inline constexpr std::array<double, 3> kRhoValues = {100.0, 300.0, 500.0};
inline constexpr std::array<double, 3> kLambdaValues = {50.0, 1000.0, 5000.0};
inline constexpr std::size_t kBlocksPerSession = 27;

struct Condition {
    std::string device;
    double rho_um = 300.0;
    double lambda_um = 1000.0;
    Display display = Display::Monitor;

    /// Throws ConfigError for an unknown device or non-positive decay.
    void validate() const;
    /// True when rho and lambda lie on the experimental grid.
    bool on_grid() const;
    bool operator==(const Condition&) const = default;
};

/// Devices x rho x lambda in a fixed nested order (device outermost).
std::vector<Condition> all_conditions(Display display = Display::Monitor);

/// 27 blocks: (argus4h, 100, 50) first, the rest in seeded random order.
std::vector<Condition> block_schedule(std::uint64_t seed, Task task, Display display = Display::Monitor);

/// Seeded generator with portable integer and real draws (the standard
/// distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, n).
    std::uint64_t index(std::uint64_t n);
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::mt19937_64 engine_;
};

/// Stateless seed mixing for independent sub-streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------- letters

inline constexpr std::array<char, 9> kLetters = {'C', 'D', 'E', 'F', 'L', 'O', 'P', 'T', 'Z'};
inline constexpr std::array<char, 3> kPracticeLetters = {'Q', 'I', 'N'};
/// Predicted label for a trial that ran out of time. Never a class of its own.
inline constexpr char kTimeoutLabel = '#';
inline constexpr double kLetterHeightDeg = 41.112;
inline constexpr double kTrialTimeLimitS = 60.0;

bool is_test_letter(char c);

/// Macro F1 over the letter classes occurring in truths or predictions.
/// Throws ContractError on empty input or labels outside the letter set.
double score_block(const std::vector<std::pair<char, char>>& responses);

/// 5x5 stroke bitmap, row-major, top row first.
const std::array<std::uint8_t, 25>& glyph(char letter);

/// White glyph on black, centred in the window, `height_deg` tall and wide.
Frame render_letter(char letter, int width, int height, const retina::FieldWindow& window,
                    double height_deg = kLetterHeightDeg);

struct LetterResponse {
    char response = kTimeoutLabel;
    double time_s = 0.0;
    bool timed_out = false;
};

/// Applies the time limit: a trial past 60 s is capped at 60 s and keeps the
/// forced-choice letter, flagged as timed out.
LetterResponse resolve_letter_response(char choice, double elapsed_s);

// ---------------------------------------------------------------- hallway

inline constexpr double kFeet = 0.3048;
inline constexpr double kHallWidthM = 8.0 * kFeet;
inline constexpr double kHallLengthM = 34.0 * kFeet;
inline constexpr std::array<double, 3> kObstacleRowsM = {13.0 * kFeet, 21.0 * kFeet, 29.0 * kFeet};
inline constexpr double kSlotOffsetM = 1.5 * kFeet;
inline constexpr double kFinishLineM = 30.0 * kFeet;
inline constexpr double kMonitorStartM = 4.9 * kFeet;
inline constexpr double kHmdStartM = 9.8 * kFeet;
inline constexpr double kObstacleLateralM = 0.7;
inline constexpr double kObstacleDepthM = 0.4;
inline constexpr double kAgentRadiusM = 0.4;
inline constexpr double kWalkSpeed = 1.0;
inline constexpr double kTickS = 1.0 / 90.0;
/// Collision chance level as reported for plotting; not derived here.
inline constexpr double kChanceCollisions = 1.25;

/// Hallway frame: x lateral (0 on the centreline, positive to the right),
/// y along the hall from the start wall. Yaw 0 faces +y, positive turns right.
struct Box {
    double cx = 0.0, cy = 0.0;
    double half_x = kObstacleLateralM / 2, half_y = kObstacleDepthM / 2;
};

struct Obstacle {
    int id = 0;
    int row = 0;
    /// -1 for the left slot, +1 for the right.
    int side = 1;
    Box box;
};

struct HallwayWorld {
    double width = kHallWidthM;
    double length = kHallLengthM;
    double start_y = kMonitorStartM;
    double finish_y = kFinishLineM;
    double agent_radius = kAgentRadiusM;
    std::vector<Obstacle> obstacles;

    /// Layout string such as "L13-R21-R29".
    std::string descriptor() const;
};

HallwayWorld make_hallway(std::uint64_t seed, int n_obstacles, Display layout = Display::Monitor);

struct AgentState {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double yaw_deg = 0.0;
};

struct AgentInput {
    bool forward = false;
    double yaw_rate_deg_s = 0.0;
};

/// Moves along the current heading, then turns. Walls clamp the position
/// (sliding contact, no events). Throws ContractError for dt outside (0, 0.1].
AgentState step_agent(const AgentState& s, const AgentInput& in, double dt, const HallwayWorld& world,
                      double speed = kWalkSpeed);

struct PathSample {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double yaw_deg = 0.0;

    bool operator==(const PathSample&) const = default;
};

struct CollisionEvent {
    int obstacle = 0;
    double t = 0.0;
};

/// Euclidean distance from a point to a box (0 inside).
double box_distance(const Box& b, double x, double y);

/// Earliest parameter s in [0, 1] at which a disc of radius r moving from a
/// to b touches the box, or nullopt.
std::optional<double> sweep_disc_box(const Box& b, double r, double ax, double ay, double bx, double by);

/// First contact per obstacle along the piecewise-linear path, ordered by
/// time. Throws ContractError on decreasing timestamps.
std::vector<CollisionEvent> detect_collision(const std::vector<PathSample>& path, const HallwayWorld& world);

enum class PolicyKind { Straight, Greedy, Replay };
PolicyKind parse_policy(const std::string& s);

struct Policy {
    PolicyKind kind = PolicyKind::Straight;
    /// Path for Replay.
    std::vector<PathSample> replay;
};

/// Greedy avoider control law. Exposed for tests.
AgentInput greedy_input(const AgentState& s, const HallwayWorld& world);

struct TrialRecord {
    Task task = Task::Letter;
    int block = 0;
    Condition condition;
    /// Global index within the session.
    int trial = 0;
    std::string stimulus;
    std::string response;
    std::optional<bool> correct;
    std::optional<int> collisions;
    double time_s = 0.0;
    std::uint64_t seed = 0;
    std::vector<PathSample> path;
    std::vector<CollisionEvent> events;

    bool same_row(const TrialRecord& o) const;
};

/// Simulates a hallway trial at 90 Hz until the finish line or the time limit.
TrialRecord run_headless_trial(const HallwayWorld& world, const Policy& policy, const Condition& condition);

enum class LetterPolicy { Random, Perfect };
LetterPolicy parse_letter_policy(const std::string& s);

struct ExperimentOptions {
    Task task = Task::Letter;
    std::uint64_t seed = 1;
    Display display = Display::Monitor;
    /// "random" or "perfect" for letters, "straight" or "greedy" for hallway.
    std::string policy;
};

/// Full headless session: 27 blocks x 9 letters or 27 blocks x 6 hallway trials.
std::vector<TrialRecord> run_experiment(const ExperimentOptions& opts);

/// Per-block F1 for a letter session; timeouts score as wrong.
std::vector<double> block_scores(const std::vector<TrialRecord>& records);

}  // namespace spv::tasks
