#include "snowdet/gallery.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "snowdet/io.hpp"
#include "snowdet/preprocess.hpp"

namespace snowdet {

namespace fs = std::filesystem;

namespace {

std::string html_escape(std::string_view in) {
    std::string out;
    for (char c : in) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string file_safe(std::string_view id) {
    std::string out;
    for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

std::string prob(double p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", p);
    return buf;
}

/// Square-cropped thumbnail as PNG bytes.
std::string encode_thumbnail(const cv::Mat& rgb, int size) {
    const int side = std::min(rgb.rows, rgb.cols);
    cv::Mat square = rgb(cv::Rect((rgb.cols - side) / 2, (rgb.rows - side) / 2, side, side));
    cv::Mat small, bgr;
    cv::resize(square, small, cv::Size(size, size), 0, 0, cv::INTER_AREA);
    cv::cvtColor(small, bgr, cv::COLOR_RGB2BGR);
    std::vector<unsigned char> buf;
    cv::imencode(".png", bgr, buf);
    return std::string(buf.begin(), buf.end());
}

}  // namespace

GalleryResult render_gallery(const MetricsReport& report, std::span<const PredictionResult> predictions,
                             const DatasetManifest& manifest, const fs::path& out_dir, const GalleryOptions& options) {
    GalleryResult result;
    fs::create_directories(out_dir / "thumbs");
    const std::set<std::string> misclassified(report.misclassified_ids.begin(), report.misclassified_ids.end());

    // Ids the report flags but that have no prediction still get a tile.
    std::vector<PredictionResult> entries(predictions.begin(), predictions.end());
    std::set<std::string> seen;
    for (const auto& p : predictions) seen.insert(p.record_id);
    for (const auto& id : report.misclassified_ids) {
        if (!seen.count(id)) {
            PredictionResult missing;
            missing.record_id = id;
            entries.push_back(missing);
            result.warnings.push_back("misclassified id without a prediction: " + id);
        }
    }

    std::ostringstream tiles;
    int index = 0;
    for (const auto& p : entries) {
        const bool flagged = misclassified.count(p.record_id) > 0;
        const bool has_prediction = seen.count(p.record_id) > 0;
        const auto* record = manifest.find(p.record_id);

        std::string img_html;
        if (record == nullptr) {
            result.warnings.push_back("record not in manifest: " + p.record_id);
        } else {
            try {
                const auto thumb_name = "thumbs/" + std::to_string(index) + "_" + file_safe(p.record_id) + ".png";
                write_file_atomic(out_dir / thumb_name, encode_thumbnail(load_rgb(record->path), options.thumb_size));
                img_html = "<img src=\"" + thumb_name + "\" alt=\"" + html_escape(p.record_id) + "\">";
            } catch (const std::exception& e) {
                result.warnings.push_back("image unavailable for " + p.record_id + ": " + e.what());
            }
        }
        if (img_html.empty()) {
            img_html = "<div class=\"placeholder\">image unavailable</div>";
            ++result.placeholders;
        }

        std::string body;
        const auto truth = p.truth ? std::string(to_string(*p.truth)) : (record ? std::string(to_string(record->label)) : "?");
        if (has_prediction) {
            body = "truth: " + truth + "<br>predicted: " + std::string(to_string(p.label)) + "<br>" +
                   html_escape(options.model_a_name) + ": " + prob(p.probs_a[kSnowIndex]) + "<br>" +
                   html_escape(options.model_b_name) + ": " + prob(p.probs_b[kSnowIndex]) + "<br>ensemble: " +
                   prob(p.snow_probability());
        } else {
            body = "truth: " + truth + "<br>no prediction";
        }
        if (flagged) body = "<b>" + body + "<br>MISCLASSIFIED</b>";

        tiles << "<figure class=\"tile" << (flagged ? " miss" : "") << "\">" << img_html << "<figcaption><code>"
              << html_escape(p.record_id) << "</code><br>" << body << "</figcaption></figure>\n";
        ++result.tiles;
        if (flagged) ++result.flagged;
        ++index;
    }

    std::ostringstream page;
    page << "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>" << html_escape(options.title)
         << "</title>\n<style>body{font-family:sans-serif;margin:1.5em}"
            ".grid{display:flex;flex-wrap:wrap;gap:12px}"
            ".tile{width:" << options.thumb_size + 20 << "px;margin:0;padding:8px;border:2px solid #ccc;font-size:12px}"
            ".tile img,.placeholder{width:" << options.thumb_size << "px;height:" << options.thumb_size << "px}"
            ".placeholder{background:#ddd;display:flex;align-items:center;justify-content:center}"
            ".miss{border:3px solid #c00}</style></head><body>\n"
         << "<h1>" << html_escape(options.title) << "</h1>\n<p>accuracy " << format_percent(report.accuracy)
         << " &middot; F1 (macro) " << format_percent(report.macro_f1) << " &middot; FP/N "
         << format_percent(report.fp_ratio) << " &middot; FN/P " << format_percent(report.fn_ratio) << " &middot; "
         << result.flagged << " of " << result.tiles << " misclassified (bold)</p>\n<div class=\"grid\">\n"
         << tiles.str() << "</div></body></html>\n";
    result.page = out_dir / "index.html";
    write_file_atomic(result.page, page.str());
    return result;
}

}  // namespace snowdet
