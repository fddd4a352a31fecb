#include "typespace/errors.hpp"
#include "typespace/harness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace typespace {

std::string_view verdict_name(Verdict v) {
  switch (v) {
  case Verdict::Accept:
    return "accept";
  case Verdict::Reject:
    return "reject";
  case Verdict::Skip:
    return "skip";
  }
  return "?";
}

std::string apply_annotation(std::string_view source, const SymbolSite &site,
                             const std::string &type) {
  std::string out;
  if (site.existing) {
    if (site.begin > site.end || site.end > source.size())
      throw ContractViolation("apply_annotation: site outside the source");
    out.append(source.substr(0, site.begin));
    out.append(type);
    out.append(source.substr(site.end));
    return out;
  }
  if (site.insert_at > source.size())
    throw ContractViolation("apply_annotation: site outside the source");
  out.append(source.substr(0, site.insert_at));
  out.append(site.is_return ? " -> " : ": ");
  out.append(type);
  out.append(source.substr(site.insert_at));
  return out;
}

namespace {

// Removes a scratch directory when it goes out of scope.
struct ScratchDir {
  fs::path path;
  ~ScratchDir() {
    std::error_code ec;
    if (!path.empty())
      fs::remove_all(path, ec);
  }
};

} // namespace

CheckResult checker_hook(const CheckerConfig &config, std::string_view source,
                         const std::string &file_name, const SymbolSite &site,
                         const std::string &type) {
  if (config.command.empty())
    return {Verdict::Skip, "no checker configured"};

  std::string tmpl = (fs::temp_directory_path() / "typespace-check-XXXXXX").string();
  if (!mkdtemp(tmpl.data()))
    return {Verdict::Skip, "cannot create scratch directory"};
  ScratchDir dir{tmpl};
  fs::path file = dir.path / fs::path(file_name).filename();
  if (file.filename().empty())
    file = dir.path / "module.py";
  {
    std::ofstream out(file, std::ios::binary);
    std::string text = apply_annotation(source, site, type);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
      return {Verdict::Skip, "cannot write scratch file"};
  }
  fs::path log = dir.path / "checker.log";

  std::vector<std::string> args = config.command;
  args.push_back(file.string());
  std::vector<char *> argv;
  for (auto &a : args)
    argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = fork();
  if (pid < 0)
    return {Verdict::Skip, "fork failed"};
  if (pid == 0) {
    setpgid(0, 0);
    int fd = open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd >= 0) {
      dup2(fd, 1);
      dup2(fd, 2);
      close(fd);
    }
    if (chdir(dir.path.c_str()) != 0)
      _exit(127);
    execvp(argv[0], argv.data());
    _exit(127);
  }

  auto deadline = std::chrono::steady_clock::now() + config.timeout;
  int status = 0;
  bool timed_out = false;
  for (;;) {
    pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid)
      break;
    if (r < 0)
      return {Verdict::Skip, "waitpid failed"};
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  std::string output;
  {
    std::ifstream in(log, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    output = ss.str();
    if (output.size() > 2000)
      output.resize(2000);
  }
  if (timed_out)
    return {Verdict::Skip, "checker timed out"};
  if (WIFSIGNALED(status))
    return {Verdict::Skip, "checker killed by signal " + std::to_string(WTERMSIG(status))};
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (code == 0)
    return {Verdict::Accept, output};
  if (code == 1)
    return {Verdict::Reject, output};
  return {Verdict::Skip, "checker exited with status " + std::to_string(code) + ": " + output};
}

} // namespace typespace
