#include <cmath>
#include <fstream>

#include "erl/synthetic.hpp"

namespace erl {

void write_ppm(const std::string& path, const std::vector<float>& rgb, int h,
               int w) {
  if (rgb.size() != static_cast<size_t>(h) * w * 3)
    throw TensorError("write_ppm: buffer size mismatch for " + path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("write_ppm: cannot open '" + path + "'");
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(rgb.size());
  for (size_t i = 0; i < rgb.size(); ++i) {
    float v = std::min(std::max(rgb[i], 0.0f), 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw TensorError("write_ppm: write failed for '" + path + "'");
}

std::vector<float> read_ppm(const std::string& path, int& h, int& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("read_ppm: cannot open '" + path + "'");
  std::string magic;
  int maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1 || maxval != 255)
    throw TensorError("read_ppm: unsupported header in '" + path + "'");
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<size_t>(h) * w * 3);
  f.read(reinterpret_cast<char*>(bytes.data()),
         static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw TensorError("read_ppm: truncated pixel data in '" + path + "'");
  std::vector<float> out(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i] / 255.0f;
  return out;
}

}  // namespace erl
