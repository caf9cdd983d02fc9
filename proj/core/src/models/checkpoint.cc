#include "sslforge/models/checkpoint.h"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/io.h"

namespace sslforge {
namespace {

std::string file_name(const std::string& group, const std::string& name) {
  std::string out = group + "." + name + ".sslt";
  for (char& c : out) {
    if (c == '/' || c == '\\') c = '_';
  }
  return out;
}

void write_group(std::ostream& manifest, const std::filesystem::path& dir,
                 const std::string& group, const ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string file = file_name(group, params.name(i));
    save_tensor(dir / file, params.at(i));
    manifest << fmt::format("tensor {} {} {} {}\n", group, params.name(i),
                            params.decays(i) ? 1 : 0, file);
  }
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "sslforge-checkpoint 1\n";
  manifest << "spec_hash " << ckpt.spec_hash << "\n";
  manifest << "step " << ckpt.step << "\n";
  manifest << "seed " << ckpt.seed << "\n";
  write_group(manifest, dir, "student", ckpt.student);
  if (ckpt.teacher) write_group(manifest, dir, "teacher", *ckpt.teacher);
  if (!ckpt.center.empty()) {
    save_tensor(dir / "center.sslt", Tensor({1, ckpt.center.size()}, ckpt.center));
    manifest << "tensor center center 0 center.sslt\n";
  }
  std::ofstream out(dir / "manifest.txt");
  out << manifest.str();
  if (!out) throw DataError("cannot write checkpoint manifest in " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw DataError("no checkpoint manifest in " + dir.string());
  std::string line;
  std::getline(in, line);
  if (line != "sslforge-checkpoint 1") throw DataError("unrecognized checkpoint manifest");
  Checkpoint ckpt;
  ParamSet teacher;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "spec_hash") {
      fields >> ckpt.spec_hash;
    } else if (key == "step") {
      fields >> ckpt.step;
    } else if (key == "seed") {
      fields >> ckpt.seed;
    } else if (key == "tensor") {
      std::string group, name, file;
      int decay = 0;
      fields >> group >> name >> decay >> file;
      if (!fields) throw DataError("malformed checkpoint line: " + line);
      const Tensor t = load_tensor(dir / file);
      if (group == "student") {
        ckpt.student.add(name, t, decay != 0);
      } else if (group == "teacher") {
        teacher.add(name, t, decay != 0);
      } else if (group == "center") {
        ckpt.center = t.vec();
      } else {
        throw DataError("unknown checkpoint group " + group);
      }
    } else {
      throw DataError("unknown checkpoint manifest key " + key);
    }
  }
  if (teacher.size() > 0) ckpt.teacher = teacher.frozen();
  return ckpt;
}

}  // namespace sslforge
