#include "unicon/image_io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <filesystem>

namespace unicon::io {

namespace {

cv::Mat read_gray(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::MissingFile, path);
    cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
    if (img.empty())
        throw Error(ErrorCode::DecodeError, "cannot decode " + path);
    if (img.channels() != 1)
        throw Error(ErrorCode::DecodeError, "expected single-channel image: " + path);
    return img;
}

}  // namespace

Tensor read_slice(const std::string& path) {
    cv::Mat img = read_gray(path);
    const int h = img.rows, w = img.cols;
    Tensor out({h, w});
    if (img.depth() == CV_16U) {
        for (int y = 0; y < h; ++y) {
            const auto* row = img.ptr<std::uint16_t>(y);
            for (int x = 0; x < w; ++x) out.at(y, x) = row[x] / 65535.0;
        }
    } else if (img.depth() == CV_8U) {
        for (int y = 0; y < h; ++y) {
            const auto* row = img.ptr<std::uint8_t>(y);
            for (int x = 0; x < w; ++x) out.at(y, x) = row[x] / 255.0;
        }
    } else {
        throw Error(ErrorCode::DecodeError, "unsupported bit depth: " + path);
    }
    return out;
}

void write_slice16(const std::string& path, const Tensor& image) {
    if (image.ndim() != 2)
        throw Error(ErrorCode::ShapeError, "slice must be 2-D");
    const int h = image.dim(0), w = image.dim(1);
    cv::Mat img(h, w, CV_16U);
    for (int y = 0; y < h; ++y) {
        auto* row = img.ptr<std::uint16_t>(y);
        for (int x = 0; x < w; ++x) {
            double v = image.at(y, x);
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            row[x] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
    }
    if (!cv::imwrite(path, img))
        throw Error(ErrorCode::IoError, "cannot write " + path);
}

Tensor read_mask(const std::string& path) {
    cv::Mat img = read_gray(path);
    if (img.depth() != CV_8U)
        throw Error(ErrorCode::DecodeError, "mask must be 8-bit: " + path);
    const int h = img.rows, w = img.cols;
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        const auto* row = img.ptr<std::uint8_t>(y);
        for (int x = 0; x < w; ++x) {
            if (row[x] == 0)
                out.at(y, x) = 0.0;
            else if (row[x] == 255)
                out.at(y, x) = 1.0;
            else
                throw Error(ErrorCode::DecodeError,
                            "mask pixel outside {0,255}: " + path);
        }
    }
    return out;
}

void write_mask(const std::string& path, const Tensor& mask) {
    if (mask.ndim() != 2)
        throw Error(ErrorCode::ShapeError, "mask must be 2-D");
    const int h = mask.dim(0), w = mask.dim(1);
    cv::Mat img(h, w, CV_8U);
    for (int y = 0; y < h; ++y) {
        auto* row = img.ptr<std::uint8_t>(y);
        for (int x = 0; x < w; ++x) {
            const double v = mask.at(y, x);
            if (v == 0.0)
                row[x] = 0;
            else if (v == 1.0)
                row[x] = 255;
            else
                throw Error(ErrorCode::ShapeError, "mask values must be 0 or 1");
        }
    }
    if (!cv::imwrite(path, img))
        throw Error(ErrorCode::IoError, "cannot write " + path);
}

}  // namespace unicon::io
