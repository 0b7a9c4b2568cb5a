#include "hgan/masks.hpp"

#include <algorithm>
#include <map>

#include <opencv2/imgproc.hpp>

namespace hgan {

std::string to_string(Marker m)
{
    return m == Marker::cd3 ? "cd3" : "cd8";
}

Marker parse_marker(const std::string& s)
{
    if (s == "cd3" || s == "CD3")
        return Marker::cd3;
    if (s == "cd8" || s == "CD8")
        return Marker::cd8;
    throw std::invalid_argument("unknown marker '" + s + "'");
}

namespace {

void sort_unique(std::vector<int>& v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

MaskSet::MaskSet(LabelImage nuclei) : nuclei_(std::move(nuclei))
{
    std::vector<std::size_t> hist;
    for (std::int32_t v : nuclei_.data) {
        if (v < 0)
            throw InvalidLabels("negative nucleus label " + std::to_string(v));
        if (static_cast<std::size_t>(v) >= hist.size())
            hist.resize(static_cast<std::size_t>(v) + 1, 0);
        ++hist[static_cast<std::size_t>(v)];
    }
    count_ = hist.empty() ? 0 : static_cast<int>(hist.size()) - 1;
    for (int k = 1; k <= count_; ++k)
        if (hist[static_cast<std::size_t>(k)] == 0)
            throw InvalidLabels("labels are not contiguous: label " + std::to_string(k) + " has no pixels");
}

MaskSet::MaskSet(LabelImage nuclei, std::vector<int> cd3_positive, std::vector<int> cd8_positive)
    : MaskSet(std::move(nuclei))
{
    cd3_ = std::move(cd3_positive);
    cd8_ = std::move(cd8_positive);
    cd3_classified_ = true;
    cd8_classified_ = true;
    establish_invariant();
}

void MaskSet::establish_invariant()
{
    sort_unique(cd3_);
    sort_unique(cd8_);
    std::erase_if(cd3_, [this](int k) { return k < 1 || k > count_; });
    std::vector<int> kept;
    std::set_intersection(cd8_.begin(), cd8_.end(), cd3_.begin(), cd3_.end(), std::back_inserter(kept));
    cd8_ = std::move(kept);
}

bool MaskSet::is_positive(int label, Marker m) const
{
    const auto& s = positives(m);
    return std::binary_search(s.begin(), s.end(), label);
}

std::vector<std::size_t> MaskSet::areas() const
{
    std::vector<std::size_t> a(static_cast<std::size_t>(count_) + 1, 0);
    for (std::int32_t v : nuclei_.data)
        ++a[static_cast<std::size_t>(v)];
    return a;
}

BinaryMask MaskSet::nucleus_mask() const
{
    BinaryMask out(nuclei_.width, nuclei_.height);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = nuclei_.data[i] > 0 ? 1 : 0;
    return out;
}

BinaryMask MaskSet::positive_mask(Marker m) const
{
    std::vector<std::uint8_t> lut(static_cast<std::size_t>(count_) + 1, 0);
    for (int k : positives(m))
        lut[static_cast<std::size_t>(k)] = 1;
    BinaryMask out(nuclei_.width, nuclei_.height);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = lut[static_cast<std::size_t>(nuclei_.data[i])];
    return out;
}

MaskSet MaskSet::with_positives(Marker m, std::vector<int> labels) const
{
    MaskSet out = *this;
    if (m == Marker::cd3) {
        out.cd3_ = std::move(labels);
        out.cd3_classified_ = true;
    } else {
        out.cd8_ = std::move(labels);
        out.cd8_classified_ = true;
    }
    out.establish_invariant();
    return out;
}

bool MaskSet::invariant_holds() const
{
    if (!std::is_sorted(cd3_.begin(), cd3_.end()) || !std::is_sorted(cd8_.begin(), cd8_.end()))
        return false;
    if (!cd3_.empty() && (cd3_.front() < 1 || cd3_.back() > count_))
        return false;
    return std::includes(cd3_.begin(), cd3_.end(), cd8_.begin(), cd8_.end());
}

MaskSet ingest_nucleus_mask(const LabelImage& labeled)
{
    std::map<std::int32_t, std::int32_t> remap;
    for (std::int32_t v : labeled.data) {
        if (v < 0)
            throw InvalidLabels("negative nucleus label " + std::to_string(v));
        if (v > 0)
            remap.emplace(v, 0);
    }
    std::int32_t next = 1;
    for (auto& [from, to] : remap)
        to = next++;
    LabelImage out(labeled.width, labeled.height);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = labeled.data[i] == 0 ? 0 : remap.at(labeled.data[i]);
    return MaskSet(std::move(out));
}

MaskSet label_blobs(const Image& hoechst, double intensity_floor, int min_area)
{
    LabelImage out(hoechst.width, hoechst.height);
    if (hoechst.empty())
        return MaskSet(std::move(out));

    cv::Mat binary(hoechst.height, hoechst.width, CV_8U);
    for (int y = 0; y < hoechst.height; ++y)
        for (int x = 0; x < hoechst.width; ++x)
            binary.at<std::uint8_t>(y, x) = hoechst.at(x, y) > intensity_floor ? 255 : 0;

    cv::Mat labels;
    cv::Mat stats;
    cv::Mat centroids;
    const int n = cv::connectedComponentsWithStats(binary, labels, stats, centroids, 4, CV_32S);

    // Final labels follow the raster order of each component's first pixel,
    // independent of how OpenCV numbers them internally.
    std::vector<std::int32_t> remap(static_cast<std::size_t>(n), -1);
    remap[0] = 0;
    std::int32_t next = 1;
    for (int y = 0; y < hoechst.height; ++y)
        for (int x = 0; x < hoechst.width; ++x) {
            const auto k = static_cast<std::size_t>(labels.at<std::int32_t>(y, x));
            if (remap[k] < 0)
                remap[k] = stats.at<int>(static_cast<int>(k), cv::CC_STAT_AREA) >= min_area ? next++ : 0;
            out.at(x, y) = remap[k];
        }
    return MaskSet(std::move(out));
}

std::vector<double> region_means(const MaskSet& mask, const Image& channel)
{
    if (channel.width != mask.width() || channel.height != mask.height())
        throw std::invalid_argument("region_means: channel and mask sizes differ");
    std::vector<double> sum(static_cast<std::size_t>(mask.count()) + 1, 0.0);
    std::vector<std::size_t> n(sum.size(), 0);
    const auto& lab = mask.nuclei().data;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        sum[static_cast<std::size_t>(lab[i])] += channel.data[i];
        ++n[static_cast<std::size_t>(lab[i])];
    }
    for (std::size_t k = 0; k < sum.size(); ++k)
        sum[k] = n[k] ? sum[k] / static_cast<double>(n[k]) : 0.0;
    return sum;
}

MaskSet classify_positive(const MaskSet& mask, const Image& channel, double threshold, Marker target)
{
    if (target == Marker::cd8 && !mask.classified(Marker::cd3))
        throw MissingPrerequisite("CD8 classification requires CD3 positives to be classified first");
    const auto means = region_means(mask, channel);
    std::vector<int> positive;
    for (int k = 1; k <= mask.count(); ++k)
        if (means[static_cast<std::size_t>(k)] >= threshold)
            positive.push_back(k);
    return mask.with_positives(target, std::move(positive));
}

}  // namespace hgan
