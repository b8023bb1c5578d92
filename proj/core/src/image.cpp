#include "ppsam/image.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ppsam/error.hpp"

namespace ppsam {

namespace {

cv::Mat read_mat(const std::filesystem::path& path, int flags) {
  cv::Mat mat = cv::imread(path.string(), flags);
  if (mat.empty()) throw Error(ErrorCode::CorruptFile, "cannot decode image " + path.string());
  return mat;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw Error(ErrorCode::Io, "cannot write image " + path.string());
}

std::uint32_t be16(const unsigned char* p) { return (std::uint32_t{p[0]} << 8) | p[1]; }
std::uint32_t be32(const unsigned char* p) { return (be16(p) << 16) | be16(p + 2); }

std::optional<Dimensions> probe_png(std::istream& in) {
  std::array<unsigned char, 24> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  if (in.gcount() != static_cast<std::streamsize>(head.size())) return std::nullopt;
  static constexpr std::array<unsigned char, 8> kSig{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (!std::equal(kSig.begin(), kSig.end(), head.begin())) return std::nullopt;
  return Dimensions{static_cast<int>(be32(&head[16])), static_cast<int>(be32(&head[20]))};
}

std::optional<Dimensions> probe_jpeg(std::istream& in) {
  unsigned char soi[2];
  in.read(reinterpret_cast<char*>(soi), 2);
  if (in.gcount() != 2 || soi[0] != 0xFF || soi[1] != 0xD8) return std::nullopt;
  for (;;) {
    int byte = in.get();
    while (byte == 0xFF) byte = in.get();  // fill bytes
    if (byte == EOF) return std::nullopt;
    const int marker = byte;
    if (marker == 0xD9 || marker == 0xDA) return std::nullopt;  // EOI / SOS before a frame header
    if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;  // standalone markers
    unsigned char len_bytes[2];
    in.read(reinterpret_cast<char*>(len_bytes), 2);
    if (in.gcount() != 2) return std::nullopt;
    const auto length = be16(len_bytes);
    if (length < 2) return std::nullopt;
    const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
    if (sof) {
      unsigned char frame[5];
      in.read(reinterpret_cast<char*>(frame), 5);
      if (in.gcount() != 5) return std::nullopt;
      return Dimensions{static_cast<int>(be16(&frame[3])), static_cast<int>(be16(&frame[1]))};
    }
    in.seekg(length - 2, std::ios::cur);
    if (!in) return std::nullopt;
  }
}

}  // namespace

RgbImage read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = read_mat(path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out{rgb.rows, rgb.cols, {}};
  out.data.assign(rgb.datastart, rgb.dataend);
  return out;
}

GrayImage read_gray(const std::filesystem::path& path) {
  cv::Mat gray = read_mat(path, cv::IMREAD_GRAYSCALE);
  GrayImage out{gray.rows, gray.cols, {}};
  out.data.assign(gray.datastart, gray.dataend);
  return out;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  write_mat(path, bgr);
}

void write_gray(const std::filesystem::path& path, const GrayImage& image) {
  write_mat(path, cv::Mat(image.height, image.width, CV_8UC1, const_cast<std::uint8_t*>(image.data.data())));
}

Dimensions probe_image_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::CorruptFile, "cannot open " + path.string());
  if (auto dims = probe_png(in)) return *dims;
  in.clear();
  in.seekg(0);
  if (auto dims = probe_jpeg(in)) return *dims;
  const auto rgb = read_mat(path, cv::IMREAD_UNCHANGED);
  return {rgb.cols, rgb.rows};
}

RgbImage resize_bilinear(const RgbImage& image, Dimensions target) {
  if (image.dims() == target) return image;
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(target.width, target.height), 0, 0, cv::INTER_LINEAR);
  RgbImage out{dst.rows, dst.cols, {}};
  out.data.assign(dst.datastart, dst.dataend);
  return out;
}

GrayImage resize_nearest(const GrayImage& image, Dimensions target) {
  if (image.dims() == target) return image;
  cv::Mat src(image.height, image.width, CV_8UC1, const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(target.width, target.height), 0, 0, cv::INTER_NEAREST);
  GrayImage out{dst.rows, dst.cols, {}};
  out.data.assign(dst.datastart, dst.dataend);
  return out;
}

ProbabilityMap resize_bilinear(const ProbabilityMap& map, Dimensions target) {
  if (map.dims() == target) return map;
  cv::Mat src(map.height, map.width, CV_32FC1, const_cast<float*>(map.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(target.width, target.height), 0, 0, cv::INTER_LINEAR);
  ProbabilityMap out{dst.rows, dst.cols, {}};
  out.data.assign(dst.ptr<float>(), dst.ptr<float>() + dst.total());
  return out;
}

ImageTensor to_tensor(const RgbImage& image, const Normalization& norm) {
  ImageTensor out{3, image.height, image.width, {}};
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  out.data.resize(3 * plane);
  for (int c = 0; c < 3; ++c) {
    const float scale = 1.0f / norm.std[c];
    float* dst = out.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = (static_cast<float>(image.data[3 * i + c]) - norm.mean[c]) * scale;
  }
  return out;
}

BinaryMask binarize(const GrayImage& image, double threshold_fraction) {
  const std::uint8_t peak = image.data.empty() ? 0 : *std::max_element(image.data.begin(), image.data.end());
  const double cut = threshold_fraction * peak;
  std::vector<std::uint8_t> bits(image.data.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (peak > 0 && image.data[i] > cut) ? 1 : 0;
  return BinaryMask(image.height, image.width, std::move(bits));
}

BinaryMask threshold_map(const ProbabilityMap& map, double threshold) {
  std::vector<std::uint8_t> bits(map.data.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = map.data[i] > threshold ? 1 : 0;
  return BinaryMask(map.height, map.width, std::move(bits));
}

}  // namespace ppsam
