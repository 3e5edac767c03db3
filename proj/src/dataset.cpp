#include "occsplat/dataset.hpp"

#include "occsplat/rng.hpp"
#include "occsplat/threading.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace occsplat {

namespace {

// ---------------------------------------------------------------------
// Humanoid capsule rig: 15 joints, one capsule per bone. Units: meters,
// y up, figure roughly 1.9 tall standing at the origin.

struct Capsule {
    int joint;   // capsule moves rigidly with this joint
    Vec3 p0, p1; // rest-space segment endpoints
    double radius;
};

struct Rig {
    std::vector<int> parents;
    std::vector<Vec3> joints;
    std::vector<Capsule> capsules;
};

enum JointId {
    kPelvis, kSpine, kChest, kNeck, kHead,
    kLShoulder, kLElbow, kLWrist,
    kRShoulder, kRElbow, kRWrist,
    kLHip, kLKnee, kRHip, kRKnee
};

Rig humanoid_rig() {
    Rig rig;
    rig.parents = {-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 0, 13};
    rig.joints = {
        {0.00, 1.00, 0}, {0.00, 1.15, 0}, {0.00, 1.30, 0}, {0.00, 1.45, 0}, {0.00, 1.55, 0},
        {0.18, 1.40, 0}, {0.45, 1.40, 0}, {0.70, 1.40, 0},
        {-0.18, 1.40, 0}, {-0.45, 1.40, 0}, {-0.70, 1.40, 0},
        {0.10, 0.95, 0}, {0.12, 0.55, 0},
        {-0.10, 0.95, 0}, {-0.12, 0.55, 0}};
    auto j = [&](int id) { return rig.joints[id]; };
    rig.capsules = {
        {kPelvis, j(kPelvis) + Vec3(-0.10, 0, 0), j(kPelvis) + Vec3(0.10, 0, 0), 0.11},
        {kSpine, j(kSpine), j(kChest), 0.11},
        {kChest, j(kChest), j(kNeck), 0.10},
        {kNeck, j(kNeck), j(kHead), 0.05},
        {kHead, j(kHead), j(kHead) + Vec3(0, 0.10, 0), 0.09},
        {kLShoulder, j(kLShoulder), j(kLElbow), 0.047},
        {kLElbow, j(kLElbow), j(kLWrist), 0.040},
        {kLWrist, j(kLWrist), j(kLWrist) + Vec3(0.08, 0, 0), 0.038},
        {kRShoulder, j(kRShoulder), j(kRElbow), 0.047},
        {kRElbow, j(kRElbow), j(kRWrist), 0.040},
        {kRWrist, j(kRWrist), j(kRWrist) + Vec3(-0.08, 0, 0), 0.038},
        {kLHip, j(kLHip), j(kLKnee), 0.062},
        {kLKnee, j(kLKnee), j(kLKnee) + Vec3(0.01, -0.45, 0), 0.052},
        {kRHip, j(kRHip), j(kRKnee), 0.062},
        {kRKnee, j(kRKnee), j(kRKnee) + Vec3(-0.01, -0.45, 0), 0.052}};
    return rig;
}

double capsule_area(const Capsule& c) {
    const double len = (c.p1 - c.p0).norm();
    return 2.0 * M_PI * c.radius * len + 4.0 * M_PI * c.radius * c.radius;
}

// Deterministic spiral sampling of each capsule's lateral surface,
// vertex budget split by area. Skinning weights blend the two nearest
// bones with a Gaussian falloff on segment distance.
ArticulatedTemplate build_template(const Rig& rig, int vertex_count) {
    ArticulatedTemplate tmpl;
    tmpl.joint_parents = rig.parents;
    tmpl.rest_joints = rig.joints;

    double total_area = 0.0;
    for (const auto& c : rig.capsules) total_area += capsule_area(c);

    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    std::vector<int> owner;
    for (size_t ci = 0; ci < rig.capsules.size(); ++ci) {
        const Capsule& c = rig.capsules[ci];
        int quota = std::max(4, static_cast<int>(std::lround(
                                    vertex_count * capsule_area(c) / total_area)));
        if (ci + 1 == rig.capsules.size())
            quota = std::max(4, vertex_count - static_cast<int>(tmpl.rest_vertices.size()));
        const Vec3 axis = (c.p1 - c.p0).normalized();
        Vec3 ref = std::abs(axis.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
        const Vec3 n1 = axis.cross(ref).normalized();
        const Vec3 n2 = axis.cross(n1);
        for (int i = 0; i < quota; ++i) {
            const double t = (i + 0.5) / quota;
            const double ang = golden * i;
            const Vec3 p = c.p0 + t * (c.p1 - c.p0) +
                           c.radius * (std::cos(ang) * n1 + std::sin(ang) * n2);
            tmpl.rest_vertices.push_back(p);
            owner.push_back(static_cast<int>(ci));
        }
    }

    const int n = static_cast<int>(tmpl.rest_vertices.size());
    const int k = static_cast<int>(rig.joints.size());
    tmpl.base_weights = Eigen::MatrixXd::Zero(n, k);
    auto segment_distance = [](const Vec3& p, const Vec3& a, const Vec3& b) {
        const Vec3 ab = b - a;
        const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        return (p - (a + t * ab)).norm();
    };
    const double falloff = 0.06;
    for (int i = 0; i < n; ++i) {
        // two closest bones get the weight
        std::vector<std::pair<double, int>> dist;
        for (const auto& c : rig.capsules)
            dist.push_back({segment_distance(tmpl.rest_vertices[i], c.p0, c.p1) , c.joint});
        std::sort(dist.begin(), dist.end());
        double w0 = std::exp(-0.5 * dist[0].first * dist[0].first / (falloff * falloff));
        double w1 = std::exp(-0.5 * dist[1].first * dist[1].first / (falloff * falloff));
        if (dist[0].second == dist[1].second) w1 = 0.0;
        const double total = w0 + w1;
        if (total < 1e-12) {
            tmpl.base_weights(i, dist[0].second) = 1.0;
        } else {
            tmpl.base_weights(i, dist[0].second) += w0 / total;
            tmpl.base_weights(i, dist[1].second) += w1 / total;
        }
    }
    tmpl.validate_and_finalize();
    return tmpl;
}

// ---------------------------------------------------------------------
// Analytic ray-capsule ground-truth renderer.

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::Zero();
    int capsule = -1;
    double axial = 0.0;  // position along the bone, for the texture
};

bool ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r, double& t_out) {
    const Vec3 oc = o - c;
    const double b = oc.dot(d);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0.0) return false;
    const double t = -b - std::sqrt(disc);
    if (t <= 1e-6) return false;
    t_out = t;
    return true;
}

void intersect_capsule(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, double r,
                       int index, Hit& best) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();

    // infinite cylinder about the segment axis
    const Vec3 ao = o - a;
    const Vec3 d_perp = d - d.dot(ab) / len2 * ab;
    const Vec3 ao_perp = ao - ao.dot(ab) / len2 * ab;
    const double qa = d_perp.squaredNorm();
    const double qb = 2.0 * d_perp.dot(ao_perp);
    const double qc = ao_perp.squaredNorm() - r * r;
    if (qa > 1e-12) {
        const double disc = qb * qb - 4 * qa * qc;
        if (disc >= 0.0) {
            const double t = (-qb - std::sqrt(disc)) / (2 * qa);
            if (t > 1e-6 && t < best.t) {
                const Vec3 p = o + t * d;
                const double s = (p - a).dot(ab) / len2;
                if (s >= 0.0 && s <= 1.0) {
                    best.t = t;
                    best.capsule = index;
                    best.axial = s;
                    best.normal = (p - (a + s * ab)).normalized();
                }
            }
        }
    }
    // end caps
    for (int cap = 0; cap < 2; ++cap) {
        const Vec3& center = cap == 0 ? a : b;
        double t;
        if (ray_sphere(o, d, center, r, t) && t < best.t) {
            const Vec3 p = o + t * d;
            best.t = t;
            best.capsule = index;
            best.axial = cap == 0 ? 0.0 : 1.0;
            best.normal = (p - center).normalized();
        }
    }
}

struct Palette {
    std::vector<Vec3> base;
    std::vector<double> stripe_freq;
    std::vector<double> stripe_phase;
};

Palette make_palette(std::uint64_t texture_seed, size_t capsules) {
    Rng rng(Rng::mix(texture_seed, 0xC0105));
    Palette p;
    for (size_t i = 0; i < capsules; ++i) {
        p.base.push_back(Vec3(0.25 + 0.7 * rng.uniform(), 0.25 + 0.7 * rng.uniform(),
                              0.25 + 0.7 * rng.uniform()));
        p.stripe_freq.push_back(6.0 + 10.0 * rng.uniform());
        p.stripe_phase.push_back(rng.uniform(0.0, 2.0 * M_PI));
    }
    return p;
}

}  // namespace

void render_figure(const ArticulatedTemplate& tmpl, const Pose& pose, const Camera& cam,
                   std::uint64_t texture_seed, Image3& rgb_out, Mask& mask_out) {
    static const Rig rig = humanoid_rig();
    const Palette palette = make_palette(texture_seed, rig.capsules.size());
    const JointWorld world = forward_kinematics_world(tmpl, pose);

    // Pose the capsules rigidly with their bones: a point attached to
    // joint j moves to R_j (x - J_j) + worldpos_j + root.
    std::vector<Capsule> posed = rig.capsules;
    for (size_t ci = 0; ci < posed.size(); ++ci) {
        const Capsule& rest = rig.capsules[ci];
        const Mat3& r = world.rotation[rest.joint];
        const Vec3 shift = world.translation[rest.joint] + pose.root_translation;
        const Vec3& jr = rig.joints[rest.joint];
        posed[ci].p0 = r * (rest.p0 - jr) + shift;
        posed[ci].p1 = r * (rest.p1 - jr) + shift;
    }

    rgb_out = Image3(cam.height, cam.width, 0.0);
    mask_out = Mask(cam.height, cam.width, 0);
    const Vec3 origin = cam.center();
    const Mat3 cam_to_world = cam.rotation.transpose();
    const Vec3 light = Vec3(0.4, 0.8, -0.45).normalized();

    parallel_for(static_cast<size_t>(cam.height), [&](size_t y0, size_t y1) {
        for (size_t y = y0; y < y1; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const Vec3 dir_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
                const Vec3 dir = (cam_to_world * dir_cam).normalized();
                Hit hit;
                for (size_t ci = 0; ci < posed.size(); ++ci)
                    intersect_capsule(origin, dir, posed[ci].p0, posed[ci].p1,
                                      posed[ci].radius, static_cast<int>(ci), hit);
                if (hit.capsule < 0) continue;
                mask_out.at(static_cast<int>(y), x) = 1;
                const double stripes =
                    0.78 + 0.22 * std::sin(palette.stripe_freq[hit.capsule] * hit.axial * M_PI +
                                           palette.stripe_phase[hit.capsule]);
                const double shade = 0.35 + 0.65 * std::max(0.0, hit.normal.dot(light));
                const Vec3 color = palette.base[hit.capsule] * (stripes * shade);
                for (int c = 0; c < 3; ++c)
                    rgb_out.at(static_cast<int>(y), x, c) = std::clamp(color[c], 0.0, 1.0);
            }
        }
    }, 8);
}

namespace {

Camera orbit_camera(int width, int height, double azimuth_rad) {
    // look at the figure's torso from distance 3.0
    const Vec3 target(0, 1.05, 0);
    const double dist = 3.0;
    const Vec3 eye = target + dist * Vec3(std::sin(azimuth_rad), 0.0, -std::cos(azimuth_rad));
    // camera frame: +z toward the target, +y down (image rows grow down)
    const Vec3 fwd = (target - eye).normalized();
    const Vec3 right = fwd.cross(Vec3(0, 1, 0)).normalized();
    const Vec3 down = fwd.cross(right);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = 1.15 * height;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = fwd;
    cam.translation = -(cam.rotation * eye);
    cam.validate();
    return cam;
}

Pose sequence_pose(const ArticulatedTemplate& tmpl, std::uint64_t seed, double t) {
    Rng rng(Rng::mix(seed, 0x905E));
    const double arm_amp = 0.45 + 0.2 * rng.uniform();
    const double leg_amp = 0.35 + 0.15 * rng.uniform();
    const double spine_amp = 0.12 + 0.08 * rng.uniform();
    const double phase = rng.uniform(0.0, 2.0 * M_PI);

    std::vector<Vec3> aa(tmpl.joint_count(), Vec3::Zero());
    const double w = 2.0 * M_PI * t + phase;
    aa[kLShoulder] = Vec3(0, 0, -arm_amp * std::sin(w)) + Vec3(arm_amp * 0.4 * std::cos(w), 0, 0);
    aa[kRShoulder] = Vec3(0, 0, arm_amp * std::sin(w)) + Vec3(-arm_amp * 0.4 * std::cos(w), 0, 0);
    aa[kLElbow] = Vec3(0, 0, -0.5 * arm_amp * (1 + std::sin(w)));
    aa[kRElbow] = Vec3(0, 0, 0.5 * arm_amp * (1 + std::sin(w)));
    aa[kLHip] = Vec3(leg_amp * std::sin(w), 0, 0);
    aa[kRHip] = Vec3(-leg_amp * std::sin(w), 0, 0);
    aa[kLKnee] = Vec3(-0.4 * leg_amp * (1 + std::sin(w)), 0, 0);
    aa[kRKnee] = Vec3(-0.4 * leg_amp * (1 - std::sin(w)), 0, 0);
    aa[kSpine] = Vec3(0, spine_amp * std::sin(0.5 * w), spine_amp * 0.5 * std::cos(w));
    aa[kNeck] = Vec3(0, 0.2 * std::sin(w), 0);

    const Vec3 root(0.03 * std::sin(w), 0.015 * std::cos(2 * w), 0.0);
    return Pose::from_axis_angle(aa, root);
}

}  // namespace

Dataset generate_synthetic_dataset(std::uint64_t seed, int frame_count, int width, int height,
                                   const SyntheticOptions& opts) {
    if (frame_count <= 0) throw std::invalid_argument("frame count must be positive");
    Dataset out;
    out.tmpl = build_template(humanoid_rig(), opts.template_vertices);

    const Camera train_cam = orbit_camera(width, height, 0.0);
    for (int f = 0; f < frame_count; ++f) {
        Frame frame;
        frame.index = f;
        frame.camera = train_cam;
        frame.pose = sequence_pose(out.tmpl, seed, frame_count == 1
                                                       ? 0.0
                                                       : static_cast<double>(f) / frame_count);
        render_figure(out.tmpl, frame.pose, frame.camera, seed, frame.rgb, frame.mask);
        out.train_frames.push_back(std::move(frame));
    }

    // held-out novel views of poses drawn from the same sequence
    const double azimuths[] = {0.6, -0.6, 1.1, -1.1, 0.3, -0.3, 0.9, -0.9};
    for (int v = 0; v < opts.test_frame_count; ++v) {
        Frame frame;
        frame.index = v;
        frame.camera = orbit_camera(width, height, azimuths[v % 8]);
        const int pose_idx = (v * frame_count) / std::max(1, opts.test_frame_count);
        frame.pose = out.train_frames[static_cast<size_t>(pose_idx) % out.train_frames.size()].pose;
        render_figure(out.tmpl, frame.pose, frame.camera, seed, frame.rgb, frame.mask);
        out.test_frames.push_back(std::move(frame));
    }
    return out;
}

void simulate_occlusion(std::vector<Frame>& frames, double occluded_fraction,
                        double frame_fraction) {
    if (frames.empty() || occluded_fraction <= 0.0) return;
    const Frame& ref = frames.front();
    const size_t valid = ref.mask.count();
    if (valid == 0) throw std::runtime_error("reference frame has an empty mask");

    // center row of the valid pixels
    double row_sum = 0.0;
    for (int y = 0; y < ref.mask.height; ++y)
        for (int x = 0; x < ref.mask.width; ++x)
            if (ref.mask.at(y, x)) row_sum += y;
    const int center = static_cast<int>(std::lround(row_sum / static_cast<double>(valid)));

    // per-row valid counts make the height search O(H)
    std::vector<size_t> row_counts(ref.mask.height, 0);
    for (int y = 0; y < ref.mask.height; ++y)
        for (int x = 0; x < ref.mask.width; ++x) row_counts[y] += ref.mask.at(y, x);

    int top = 0, bottom = 0;
    bool found = false;
    double achieved = 0.0;
    for (int h = 1; h <= ref.mask.height; ++h) {
        top = std::max(0, center - h / 2);
        bottom = std::min(ref.mask.height, top + h);
        size_t covered = 0;
        for (int y = top; y < bottom; ++y) covered += row_counts[y];
        achieved = static_cast<double>(covered) / static_cast<double>(valid);
        if (achieved >= occluded_fraction - 0.01) {
            if (achieved <= occluded_fraction + 0.01) found = true;
            break;
        }
    }
    if (!found) {
        std::ostringstream msg;
        msg << "occluder target fraction " << occluded_fraction
            << " unreachable; achieved " << achieved;
        throw std::runtime_error(msg.str());
    }

    const size_t modified = static_cast<size_t>(
        std::ceil(frame_fraction * static_cast<double>(frames.size())));
    for (size_t f = 0; f < modified; ++f) {
        Frame& frame = frames[f];
        for (int y = top; y < bottom; ++y) {
            for (int x = 0; x < frame.rgb.width; ++x) {
                for (int c = 0; c < 3; ++c) frame.rgb.at(y, x, c) = 0.5;  // neutral gray
                frame.mask.at(y, x) = 0;
            }
        }
    }
}

double occlusion_extent(const Mask& visible, const Mask& body_reference) {
    if (!visible.same_dims(body_reference)) throw std::invalid_argument("mask dimension mismatch");
    const size_t body = body_reference.count();
    if (body == 0) throw std::invalid_argument("empty body reference");
    size_t both = 0;
    for (size_t i = 0; i < visible.data.size(); ++i)
        both += (visible.data[i] && body_reference.data[i]) ? 1 : 0;
    return 1.0 - static_cast<double>(both) / static_cast<double>(body);
}

double psnr(const Image3& pred, const Image3& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("image dimension mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse < 1e-10) return 99.0;
    return -10.0 * std::log10(mse);
}

namespace {

std::string frame_name(const char* prefix, int i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04d.png", prefix, i);
    return buf;
}

void write_camera(std::ostream& os, const Camera& cam) {
    os << cam.fx << " " << cam.fy << " " << cam.cx << " " << cam.cy;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) os << " " << cam.rotation(r, c);
    for (int i = 0; i < 3; ++i) os << " " << cam.translation[i];
    os << " " << cam.width << " " << cam.height;
}

Camera read_camera(std::istream& is) {
    Camera cam;
    is >> cam.fx >> cam.fy >> cam.cx >> cam.cy;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) is >> cam.rotation(r, c);
    for (int i = 0; i < 3; ++i) is >> cam.translation[i];
    is >> cam.width >> cam.height;
    return cam;
}

void write_frame_line(std::ostream& os, const char* tag, const Frame& frame, int joints) {
    os << tag << " " << frame.index << " ";
    write_camera(os, frame.camera);
    const auto aa = frame.pose.to_axis_angle();
    os << " " << frame.pose.root_translation[0] << " " << frame.pose.root_translation[1] << " "
       << frame.pose.root_translation[2];
    for (int j = 0; j < joints; ++j)
        os << " " << aa[j][0] << " " << aa[j][1] << " " << aa[j][2];
    os << "\n";
}

Frame read_frame_line(std::istream& is, int joints) {
    Frame frame;
    is >> frame.index;
    frame.camera = read_camera(is);
    Vec3 root;
    is >> root[0] >> root[1] >> root[2];
    std::vector<Vec3> aa(joints);
    for (int j = 0; j < joints; ++j) is >> aa[j][0] >> aa[j][1] >> aa[j][2];
    frame.pose = Pose::from_axis_angle(aa, root);
    return frame;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& dataset) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_template((fs::path(dir) / "template.txt").string(), dataset.tmpl);

    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
    manifest.precision(17);
    manifest << "occsplat-dataset 1\n";
    manifest << "joints " << dataset.tmpl.joint_count() << "\n";
    manifest << "train_frames " << dataset.train_frames.size() << "\n";
    manifest << "test_frames " << dataset.test_frames.size() << "\n";
    for (const Frame& f : dataset.train_frames)
        write_frame_line(manifest, "train", f, dataset.tmpl.joint_count());
    for (const Frame& f : dataset.test_frames)
        write_frame_line(manifest, "test", f, dataset.tmpl.joint_count());
    if (!manifest) throw std::runtime_error("failed writing manifest in " + dir);

    for (size_t i = 0; i < dataset.train_frames.size(); ++i) {
        write_png_rgb((fs::path(dir) / frame_name("frame", static_cast<int>(i))).string(),
                      dataset.train_frames[i].rgb);
        write_png_mask((fs::path(dir) / frame_name("mask", static_cast<int>(i))).string(),
                       dataset.train_frames[i].mask);
    }
    for (size_t i = 0; i < dataset.test_frames.size(); ++i) {
        write_png_rgb((fs::path(dir) / frame_name("test_frame", static_cast<int>(i))).string(),
                      dataset.test_frames[i].rgb);
        write_png_mask((fs::path(dir) / frame_name("test_mask", static_cast<int>(i))).string(),
                       dataset.test_frames[i].mask);
    }
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset out;
    out.tmpl = load_template((fs::path(dir) / "template.txt").string());

    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot open manifest in " + dir);
    std::string magic;
    int version = 0;
    manifest >> magic >> version;
    if (magic != "occsplat-dataset" || version != 1)
        throw std::runtime_error("unrecognized dataset manifest");
    std::string key;
    int joints = 0;
    size_t n_train = 0, n_test = 0;
    manifest >> key >> joints;
    if (key != "joints" || joints != out.tmpl.joint_count())
        throw std::runtime_error("manifest joint count mismatch");
    manifest >> key >> n_train;
    if (key != "train_frames") throw std::runtime_error("bad manifest");
    manifest >> key >> n_test;
    if (key != "test_frames") throw std::runtime_error("bad manifest");

    for (size_t i = 0; i < n_train + n_test; ++i) {
        std::string tag;
        manifest >> tag;
        if (!manifest) throw std::runtime_error("truncated manifest");
        Frame frame = read_frame_line(manifest, joints);
        const bool is_test = tag == "test";
        if (!is_test && tag != "train") throw std::runtime_error("bad manifest frame tag");
        const char* prefix = is_test ? "test_frame" : "frame";
        const char* mask_prefix = is_test ? "test_mask" : "mask";
        const int idx = static_cast<int>(is_test ? out.test_frames.size()
                                                 : out.train_frames.size());
        frame.rgb = read_png_rgb((fs::path(dir) / frame_name(prefix, idx)).string());
        frame.mask = read_png_mask((fs::path(dir) / frame_name(mask_prefix, idx)).string());
        if (frame.mask.height != frame.camera.height || frame.mask.width != frame.camera.width)
            throw std::runtime_error("frame dimensions do not match the camera");
        (is_test ? out.test_frames : out.train_frames).push_back(std::move(frame));
    }
    return out;
}

}  // namespace occsplat
