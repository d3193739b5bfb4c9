#include "mivec/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mivec/bitstream.hpp"
#include "mivec/metrics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mivec {

namespace {

// Rate points from the paper's feature-width schedule: wider models pair with
// a finer explicit quantizer.
constexpr std::pair<int, int> kSweep[] = {{20, 43}, {30, 38}, {40, 33}, {60, 28}, {80, 23}};

uint64_t env_seed() {
    if (const char* s = std::getenv("MIVEC_SEED")) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw ValidationError(std::string("MIVEC_SEED is not an integer: ") + s);
        }
    }
    return 1;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cli", "cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                                std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cli", "cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("cli", "short write to " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cli", "cannot write " + path);
    f << text;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct EncodeArgs {
    std::string input, output, report_path;
    int qp = -1; // -1 = derive from grid_c schedule, else 28
    int grid_h = 4, grid_w = 4, grid_c = 24;
    std::vector<int> factors{5, 2, 2};
    int epochs = 300, qat_epochs = 30;
    double alpha = 0.7, prune_fraction = 0.4, lr = 5e-4;
    int batch_size = 2;
    uint64_t seed = 0;
    bool seed_set = false;
    int basic_view = -1;
    std::string backend = "builtin";
    std::string external_encode_cmd, external_decode_cmd;
    bool no_entropy = false;
    bool rd_sweep = false;
    bool no_grid_t = false, no_grid_v = false, no_grid_emb = false, no_ivc = false;
};

void add_encode_flags(CLI::App* cmd, EncodeArgs& a, bool ablation) {
    cmd->add_option("--input", a.input, "source sequence directory")->required();
    cmd->add_option("--output", a.output, "container file (.mvb)")->required();
    cmd->add_option("--qp", a.qp, "explicit codec quantizer [0,51]");
    cmd->add_option("--grid-h", a.grid_h, "grid rows");
    cmd->add_option("--grid-w", a.grid_w, "grid cols");
    cmd->add_option("--grid-c", a.grid_c, "grid feature width c");
    cmd->add_option("--factors", a.factors, "per-block upscale factors")->delimiter(',');
    cmd->add_option("--epochs", a.epochs, "training epochs");
    cmd->add_option("--qat-epochs", a.qat_epochs, "quantization-aware fine-tune epochs");
    cmd->add_option("--alpha", a.alpha, "L1 weight in the joint loss");
    cmd->add_option("--prune-fraction", a.prune_fraction, "fraction of parameters pruned");
    cmd->add_option("--lr", a.lr, "Adam learning rate");
    cmd->add_option("--batch-size", a.batch_size, "coordinates per optimizer step");
    auto* seed_opt = cmd->add_option("--seed", a.seed, "RNG seed (MIVEC_SEED fallback)");
    cmd->parse_complete_callback([seed_opt, &a] { a.seed_set = seed_opt->count() > 0; });
    cmd->add_option("--basic-view", a.basic_view, "override basic view index");
    cmd->add_option("--explicit-backend", a.backend, "builtin|external");
    cmd->add_option("--external-encode-cmd", a.external_encode_cmd,
                    "encoder command, {input} {output} {qp} placeholders");
    cmd->add_option("--external-decode-cmd", a.external_decode_cmd,
                    "decoder command, {input} {output} placeholders");
    cmd->add_flag("--no-entropy", a.no_entropy, "store raw quantized levels");
    cmd->add_flag("--rd-sweep", a.rd_sweep, "encode all five (c, QP) schedule points");
    cmd->add_option("--report", a.report_path, "JSON report path (default: output + .json)");
    if (ablation) {
        cmd->add_flag("--no-grid-fea-t", a.no_grid_t, "share one temporal grid slice");
        cmd->add_flag("--no-grid-fea-v", a.no_grid_v, "share one view grid slice");
        cmd->add_flag("--no-grid-emb", a.no_grid_emb, "drop per-view block embeddings");
        cmd->add_flag("--no-ivc", a.no_ivc, "disable inter-view compensation");
    }
}

EncoderConfig make_config(const EncodeArgs& a, int grid_c, int qp) {
    EncoderConfig ec;
    if (a.backend == "builtin") {
        ec.explicit_codec.backend = ExplicitBackend::builtin_dct;
    } else if (a.backend == "external") {
        ec.explicit_codec.backend = ExplicitBackend::external;
    } else {
        throw ValidationError("unknown explicit backend: " + a.backend);
    }
    ec.explicit_codec.qp = qp;
    ec.explicit_codec.external_command_template = a.external_encode_cmd;
    ec.explicit_codec.external_decode_command = a.external_decode_cmd;
    ec.model.grid_h = a.grid_h;
    ec.model.grid_w = a.grid_w;
    ec.model.grid_c = grid_c;
    ec.model.factors = a.factors;
    ec.model.no_grid_t = a.no_grid_t;
    ec.model.no_grid_v = a.no_grid_v;
    ec.model.no_grid_emb = a.no_grid_emb;
    ec.model.no_ivc = a.no_ivc;
    uint64_t seed = a.seed_set ? a.seed : env_seed();
    ec.model.seed = seed;
    ec.train.seed = seed;
    ec.train.epochs = a.epochs;
    ec.train.qat_epochs = a.qat_epochs;
    ec.train.alpha = a.alpha;
    ec.train.prune_fraction = a.prune_fraction;
    ec.train.lr = a.lr;
    ec.train.batch_size = a.batch_size;
    ec.basic_view = a.basic_view;
    ec.entropy_coded = !a.no_entropy;
    return ec;
}

json report_json(const EncodeArgs& a, const EncoderConfig& ec, const EncodeReport& rep,
                 const std::string& output) {
    json j;
    j["command"] = a.no_grid_t || a.no_grid_v || a.no_grid_emb || a.no_ivc ? "ablate" : "encode";
    j["input"] = a.input;
    j["output"] = output;
    j["seed"] = ec.train.seed;
    j["qp"] = ec.explicit_codec.qp;
    j["grid"] = {{"h", ec.model.grid_h},
                 {"w", ec.model.grid_w},
                 {"c", ec.model.grid_c},
                 {"factors", ec.model.factors}};
    j["switches"] = {{"no_grid_fea_t", ec.model.no_grid_t},
                     {"no_grid_fea_v", ec.model.no_grid_v},
                     {"no_grid_emb", ec.model.no_grid_emb},
                     {"no_ivc", ec.model.no_ivc}};
    j["basic_view"] = rep.basic_view;
    j["bpp"] = rep.bpp;
    j["view_psnr"] = rep.view_psnr;
    j["view_ssim"] = rep.view_ssim;
    j["mean_psnr"] = mean(rep.view_psnr);
    j["mean_ssim"] = mean(rep.view_ssim);
    j["segments"] = {{"header", rep.header_bytes},
                     {"metadata", rep.metadata_bytes},
                     {"explicit", rep.explicit_bytes},
                     {"implicit", rep.implicit_bytes},
                     {"total", rep.total_bytes}};
    j["model"] = {{"param_count", rep.param_count},
                  {"ratio", rep.model_ratio},
                  {"pruned_fraction", rep.pruned_fraction}};
    j["epochs"] = rep.epochs_run;
    j["train_seconds"] = rep.train_seconds;
    j["total_seconds"] = rep.total_seconds;
    return j;
}

std::string output_stem(const std::string& output) {
    fs::path p(output);
    if (p.extension() == ".mvb") p.replace_extension();
    return p.string();
}

int run_one_encode(const EncodeArgs& a, const MultiViewSequence& seq, int grid_c, int qp,
                   const std::string& output, RDPoint* point) {
    EncoderConfig ec = make_config(a, grid_c, qp);
    EncodeResult res = encode_sequence(seq, ec);
    write_file(output, res.container);
    std::string rpath = a.report_path.empty() ? output + ".json" : a.report_path;
    write_text(rpath, report_json(a, ec, res.report, output).dump(2) + "\n");
    std::cout << output << ": bpp " << res.report.bpp << ", mean PSNR "
              << mean(res.report.view_psnr) << " dB, mean SSIM " << mean(res.report.view_ssim)
              << ", basic view " << res.report.basic_view << "\n";
    for (size_t j = 0; j < res.report.view_psnr.size(); ++j)
        std::cout << "  view " << j << ": " << res.report.view_psnr[j] << " dB / "
                  << res.report.view_ssim[j] << (static_cast<int>(j) == res.report.basic_view
                                                     ? " (explicit)\n"
                                                     : "\n");
    if (point) {
        point->bpp = res.report.bpp;
        point->psnr = mean(res.report.view_psnr);
        point->ssim = mean(res.report.view_ssim);
    }
    return 0;
}

int cmd_encode(const EncodeArgs& a) {
    MultiViewSequence seq = load_sequence(a.input);
    if (!a.rd_sweep) {
        int qp = a.qp;
        if (qp < 0) {
            qp = 28;
            for (auto [c, q] : kSweep)
                if (c == a.grid_c) qp = q;
        }
        return run_one_encode(a, seq, a.grid_c, qp, a.output, nullptr);
    }
    std::string stem = output_stem(a.output);
    std::vector<RDPoint> points;
    for (auto [c, q] : kSweep) {
        int qp = a.qp >= 0 ? a.qp : q;
        RDPoint pt;
        pt.label = "c" + std::to_string(c) + "_qp" + std::to_string(qp);
        std::string out = stem + "_" + pt.label + ".mvb";
        EncodeArgs one = a;
        one.report_path.clear();
        run_one_encode(one, seq, c, qp, out, &pt);
        points.push_back(pt);
    }
    std::string csv = stem + "_rd.csv";
    write_rd_csv(csv, points);
    std::cout << "RD points written to " << csv << "\n";
    return 0;
}

void write_decoded(const DecodeResult& dec, const std::string& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cli", "cannot create " + root + ": " + ec.message());

    json jcams = json::array();
    for (const auto& c : dec.seq.cameras) {
        jcams.push_back({{"view_id", c.view_id},
                         {"position", {c.position[0], c.position[1], c.position[2]}},
                         {"orientation", {c.orientation[0], c.orientation[1], c.orientation[2]}}});
    }
    write_text((fs::path(root) / "cameras.json").string(), jcams.dump(2) + "\n");

    char vbuf[8], fbuf[12];
    for (size_t j : dec.decoded_views) {
        std::snprintf(vbuf, sizeof vbuf, "v%02d", static_cast<int>(j));
        fs::path dir = fs::path(root) / vbuf;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cli", "cannot create " + dir.string());
        for (int t = 0; t < dec.seq.T; ++t) {
            std::snprintf(fbuf, sizeof fbuf, "f%04d.png", t);
            save_png(dec.seq.frame(static_cast<int>(j), t), (dir / fbuf).string());
        }
    }
}

int cmd_decode(const std::string& input, const std::string& output,
               const std::vector<size_t>& views, bool salvage,
               const std::string& external_decode_cmd) {
    DecodeOptions opt;
    opt.views = views;
    opt.salvage = salvage;
    opt.external_decode_command = external_decode_cmd;
    DecodeResult dec = decode_sequence(read_file(input), opt);
    write_decoded(dec, output);
    std::cout << "decoded " << dec.decoded_views.size() << "/" << dec.seq.N << " views ("
              << dec.seq.T << " frames, " << dec.seq.H << "x" << dec.seq.W << ") to " << output;
    if (dec.salvaged) std::cout << " [salvage: implicit segment dropped]";
    std::cout << "\n";
    return 0;
}

std::string svg_plot(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
    const double W = 640, H = 480, ml = 70, mr = 20, mt = 20, mb = 50;
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const auto* curve : {&anchor, &test}) {
        for (const auto& p : *curve) {
            xlo = std::min(xlo, p.bpp);
            xhi = std::max(xhi, p.bpp);
            ylo = std::min(ylo, p.psnr);
            yhi = std::max(yhi, p.psnr);
        }
    }
    if (xhi <= xlo) xhi = xlo + 1;
    if (yhi <= ylo) yhi = ylo + 1;
    auto X = [&](double v) { return ml + (v - xlo) / (xhi - xlo) * (W - ml - mr); };
    auto Y = [&](double v) { return H - mb - (v - ylo) / (yhi - ylo) * (H - mt - mb); };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
                    "viewBox=\"0 0 640 480\">\n<rect width=\"640\" height=\"480\" "
                    "fill=\"white\"/>\n";
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  ml, H - mb, W - mr, H - mb, ml, mt, ml, H - mb);
    s += buf;
    for (int i = 0; i <= 4; ++i) {
        double fx = xlo + (xhi - xlo) * i / 4, fy = ylo + (yhi - ylo) * i / 4;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">"
                      "%.3f</text>\n",
                      X(fx), H - mb + 16, fx);
        s += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">"
                      "%.2f</text>\n",
                      ml - 6, Y(fy) + 4, fy);
        s += buf;
    }
    s += "<text x=\"355\" y=\"470\" font-size=\"13\" text-anchor=\"middle\">bpp</text>\n"
         "<text x=\"16\" y=\"250\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 250)\">PSNR (dB)</text>\n";

    const char* colors[2] = {"#1f6fb5", "#c0392b"};
    const char* names[2] = {"anchor", "test"};
    const std::vector<RDPoint>* curves[2] = {&anchor, &test};
    for (int k = 0; k < 2; ++k) {
        std::vector<RDPoint> pts = *curves[k];
        std::sort(pts.begin(), pts.end(),
                  [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
        s += "<polyline fill=\"none\" stroke=\"" + std::string(colors[k]) +
             "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : pts) {
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", X(p.bpp), Y(p.psnr));
            s += buf;
        }
        s += "\"/>\n";
        for (const auto& p : pts) {
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", X(p.bpp),
                          Y(p.psnr), colors[k]);
            s += buf;
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                      W - mr - 70.0, mt + 18.0 + 16.0 * k, colors[k], names[k]);
        s += buf;
    }
    s += "</svg>\n";
    return s;
}

int cmd_eval(const std::string& ref_dir, const std::string& rec_dir,
             const std::string& anchor_csv, const std::string& test_csv,
             const std::string& plot_path, const std::string& report_path) {
    json j;
    j["command"] = "eval";
    if (!ref_dir.empty() || !rec_dir.empty()) {
        MultiViewSequence ref = load_sequence(ref_dir);
        MultiViewSequence rec = load_sequence(rec_dir);
        if (ref.N != rec.N || ref.T != rec.T || ref.H != rec.H || ref.W != rec.W) {
            std::cerr << "eval: dimension mismatch, ref " << ref.N << "x" << ref.T << "x" << ref.H
                      << "x" << ref.W << " vs rec " << rec.N << "x" << rec.T << "x" << rec.H << "x"
                      << rec.W << "\n";
            return 4;
        }
        TrainReport q = evaluate_frames(ref, rec.frames);
        for (int v = 0; v < ref.N; ++v)
            std::cout << "view " << v << ": PSNR " << q.view_psnr[v] << " dB, SSIM "
                      << q.view_ssim[v] << "\n";
        std::cout << "mean: PSNR " << mean(q.view_psnr) << " dB, SSIM " << mean(q.view_ssim)
                  << "\n";
        j["view_psnr"] = q.view_psnr;
        j["view_ssim"] = q.view_ssim;
        j["mean_psnr"] = mean(q.view_psnr);
        j["mean_ssim"] = mean(q.view_ssim);
    }
    if (!anchor_csv.empty() && !test_csv.empty()) {
        std::vector<RDPoint> anchor = read_rd_csv(anchor_csv);
        std::vector<RDPoint> test = read_rd_csv(test_csv);
        BDRateReport bd_psnr = bd_rate(anchor, test, QualityKey::psnr);
        BDRateReport bd_ssim = bd_rate(anchor, test, QualityKey::ssim);
        std::cout << "BD-rate (PSNR): " << bd_psnr.bd_rate_percent << "%\n";
        std::cout << "BD-rate (SSIM): " << bd_ssim.bd_rate_percent << "%\n";
        j["bd_rate_psnr"] = bd_psnr.bd_rate_percent;
        j["bd_rate_ssim"] = bd_ssim.bd_rate_percent;
        if (!plot_path.empty()) write_text(plot_path, svg_plot(anchor, test));
    } else if (!plot_path.empty()) {
        throw ValidationError("--plot needs --anchor-csv and --test-csv");
    }
    if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
    return 0;
}

int cmd_synth(const std::string& output, int views, int frames, int height, int width,
              double disparity, uint64_t seed) {
    MultiViewSequence seq = generate_synthetic(views, frames, height, width, disparity, seed);
    save_frames(seq, output);
    std::cout << "wrote " << views << " views x " << frames << " frames (" << height << "x"
              << width << ") to " << output << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"multi-view video codec: explicit basic view + implicit model for the rest"};
    app.require_subcommand(1);

    EncodeArgs enc, abl;
    auto* c_enc = app.add_subcommand("encode", "compress a sequence directory to a container");
    add_encode_flags(c_enc, enc, false);
    auto* c_abl = app.add_subcommand("ablate", "encode with component switches disabled");
    add_encode_flags(c_abl, abl, true);

    std::string d_in, d_out, d_xdec;
    std::vector<size_t> d_views;
    bool d_salvage = false;
    auto* c_dec = app.add_subcommand("decode", "reconstruct a container to a PNG tree");
    c_dec->add_option("--input", d_in, "container file")->required();
    c_dec->add_option("--output", d_out, "destination directory")->required();
    c_dec->add_option("--views", d_views, "subset of views to decode")->delimiter(',');
    c_dec->add_flag("--salvage", d_salvage, "tolerate a damaged implicit segment");
    c_dec->add_option("--external-decode-cmd", d_xdec, "external backend decoder command");

    std::string e_ref, e_rec, e_acsv, e_tcsv, e_plot, e_report;
    auto* c_eval = app.add_subcommand("eval", "score reconstructions and compare RD curves");
    c_eval->add_option("--ref", e_ref, "reference sequence directory");
    c_eval->add_option("--rec", e_rec, "reconstructed sequence directory");
    c_eval->add_option("--anchor-csv", e_acsv, "anchor RD points");
    c_eval->add_option("--test-csv", e_tcsv, "test RD points");
    c_eval->add_option("--plot", e_plot, "write an RD curve SVG");
    c_eval->add_option("--report", e_report, "JSON report path");

    std::string s_out;
    int s_views = 4, s_frames = 8, s_h = 80, s_w = 80;
    double s_disp = 2.0;
    uint64_t s_seed = 7;
    auto* c_syn = app.add_subcommand("synth", "generate the deterministic test scene");
    c_syn->add_option("--output", s_out, "destination directory")->required();
    c_syn->add_option("--views", s_views, "view count");
    c_syn->add_option("--frames", s_frames, "frame count");
    c_syn->add_option("--height", s_h, "frame height");
    c_syn->add_option("--width", s_w, "frame width");
    c_syn->add_option("--disparity", s_disp, "per-view horizontal shift in pixels");
    c_syn->add_option("--seed", s_seed, "scene seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_enc->parsed()) return cmd_encode(enc);
        if (c_abl->parsed()) return cmd_encode(abl);
        if (c_dec->parsed()) return cmd_decode(d_in, d_out, d_views, d_salvage, d_xdec);
        if (c_eval->parsed()) {
            if ((e_ref.empty()) != (e_rec.empty()))
                throw ValidationError("--ref and --rec must be given together");
            if (e_ref.empty() && e_acsv.empty())
                throw ValidationError("eval needs --ref/--rec directories or CSV inputs");
            if ((e_acsv.empty()) != (e_tcsv.empty()))
                throw ValidationError("--anchor-csv and --test-csv must be given together");
            return cmd_eval(e_ref, e_rec, e_acsv, e_tcsv, e_plot, e_report);
        }
        if (c_syn->parsed()) return cmd_synth(s_out, s_views, s_frames, s_h, s_w, s_disp, s_seed);
    } catch (const CorruptStreamError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace mivec
