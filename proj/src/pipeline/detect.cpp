#include "adaudit/pipeline/detect.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <fstream>

#include "adaudit/common/error.hpp"

namespace adaudit::pipeline {
namespace {

constexpr std::array<std::string_view, 80> kCoco = {
    "person",        "bicycle",      "car",           "motorcycle",    "airplane",
    "bus",           "train",        "truck",         "boat",          "traffic_light",
    "fire_hydrant",  "stop_sign",    "parking_meter", "bench",         "bird",
    "cat",           "dog",          "horse",         "sheep",         "cow",
    "elephant",      "bear",         "zebra",         "giraffe",       "backpack",
    "umbrella",      "handbag",      "tie",           "suitcase",      "frisbee",
    "skis",          "snowboard",    "sports_ball",   "kite",          "baseball_bat",
    "baseball_glove", "skateboard",  "surfboard",     "tennis_racket", "bottle",
    "wine_glass",    "cup",          "fork",          "knife",         "spoon",
    "bowl",          "banana",       "apple",         "sandwich",      "orange",
    "broccoli",      "carrot",       "hot_dog",       "pizza",         "donut",
    "cake",          "chair",        "couch",         "potted_plant",  "bed",
    "dining_table",  "toilet",       "tv",            "laptop",        "mouse",
    "remote",        "keyboard",     "cell_phone",    "microwave",     "oven",
    "toaster",       "sink",         "refrigerator",  "book",          "clock",
    "vase",          "scissors",     "teddy_bear",    "hair_drier",    "toothbrush",
};

constexpr double kEdgeSlack = 1e-9;
constexpr std::size_t kMaxOutput = 1 << 20;

[[noreturn]] void bad(const std::string& msg) {
  throw Error(ErrorCode::kAdapterFailure, "detector output: " + msg);
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(' ', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_unit(std::string_view tok, const char* what) {
  double v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v, std::chars_format::fixed);
  if (tok.empty() || ec != std::errc() || ptr != end) {
    bad(std::string("bad ") + what + " '" + std::string(tok) + "'");
  }
  if (!(v >= 0.0 && v <= 1.0)) bad(std::string(what) + " outside [0,1]");
  return v;
}

Detection parse_det_line(std::string_view line) {
  const auto tok = split_spaces(line);
  if (tok.size() != 7 || tok[0] != "det") bad("expected 'det' record, got '" + std::string(line) + "'");
  if (!is_known_category(tok[1])) bad("unknown category '" + std::string(tok[1]) + "'");
  Detection d;
  d.category = std::string(tok[1]);
  d.confidence = parse_unit(tok[2], "confidence");
  d.box = {parse_unit(tok[3], "x"), parse_unit(tok[4], "y"), parse_unit(tok[5], "w"),
           parse_unit(tok[6], "h")};
  if (d.box.x + d.box.w > 1.0 + kEdgeSlack || d.box.y + d.box.h > 1.0 + kEdgeSlack) {
    bad("box exceeds image");
  }
  return d;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  return std::string(buf, ptr);
}

}  // namespace

const std::array<std::string_view, 80>& coco_categories() { return kCoco; }

bool is_known_category(std::string_view name) {
  return std::find(kCoco.begin(), kCoco.end(), name) != kCoco.end();
}

bool has_people(const std::vector<Detection>& detections, double tau) {
  return std::any_of(detections.begin(), detections.end(), [&](const Detection& d) {
    return d.category == "person" && d.confidence >= tau;
  });
}

std::vector<Detection> parse_detection_records(std::string_view text) {
  std::vector<Detection> out;
  bool ended = false;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    const bool last = nl == std::string_view::npos;
    const auto line = text.substr(start, last ? std::string_view::npos : nl - start);
    start = last ? text.size() : nl + 1;
    if (ended) bad("data after 'end'");
    if (line == "end") {
      ended = true;
      continue;
    }
    if (last) bad("unterminated record");
    out.push_back(parse_det_line(line));
  }
  if (!ended) bad("missing 'end'");
  return out;
}

std::string format_detection_records(const std::vector<Detection>& detections) {
  std::string out;
  for (const auto& d : detections) {
    out += "det " + d.category + " " + format_number(d.confidence) + " " +
           format_number(d.box.x) + " " + format_number(d.box.y) + " " +
           format_number(d.box.w) + " " + format_number(d.box.h) + "\n";
  }
  out += "end\n";
  return out;
}

ProcessAdapter::ProcessAdapter(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
  if (argv_.empty()) throw Error(ErrorCode::kInvalidArgument, "detector command is empty");
}

std::vector<Detection> ProcessAdapter::detect(const std::filesystem::path& image) {
  std::vector<std::string> args = argv_;
  args.push_back(image.string());
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  cargs.push_back(nullptr);

  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(ErrorCode::kAdapterFailure, "pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw Error(ErrorCode::kAdapterFailure, "fork failed");
  }
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::execvp(cargs[0], cargs.data());
    ::_exit(127);
  }
  ::close(fds[1]);

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::string output;
  bool timed_out = false;
  char buf[4096];
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd p{fds[0], POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) {
      timed_out = true;
      break;
    }
    const ssize_t n = ::read(fds[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
    if (output.size() > kMaxOutput) {
      timed_out = true;  // runaway output is treated like a hang
      break;
    }
  }
  ::close(fds[0]);
  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw Error(ErrorCode::kAdapterFailure, "detector timed out on " + image.string());
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kAdapterFailure,
                "detector failed on " + image.string() +
                    (WIFSIGNALED(status) ? " (signal " + std::to_string(WTERMSIG(status)) + ")"
                                         : " (exit " + std::to_string(WEXITSTATUS(status)) + ")"));
  }
  return parse_detection_records(output);
}

OracleAdapter OracleAdapter::from_file(const std::filesystem::path& labels) {
  std::ifstream in(labels);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot read labels " + labels.string());
  std::map<std::string, std::vector<Detection>> table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) bad("label row without record: " + line);
    table[line.substr(0, sp)].push_back(parse_det_line(std::string_view(line).substr(sp + 1)));
  }
  return OracleAdapter(std::move(table));
}

std::vector<Detection> OracleAdapter::detect(const std::filesystem::path& image) {
  auto it = labels_.find(image.filename().string());
  return it == labels_.end() ? std::vector<Detection>{} : it->second;
}

}  // namespace adaudit::pipeline
