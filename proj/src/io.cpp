#include "bbm/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "bbm/errors.hpp"

namespace bbm {

static_assert(std::endian::native == std::endian::little, "binary format assumes a little-endian host");

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ValidationError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw ValidationError("not a number: '" + s + "'");
    return x;
}

nlohmann::json json_number(double x) {
    if (std::isfinite(x)) return x;
    return format_double(x);
}

double json_to_double(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_double(j.get<std::string>());
    throw ValidationError("expected a number in JSON, got " + j.dump());
}

void write_population_csv(std::ostream& out, const Population& pop) {
    out << "id,parent,birth_time,birth_pos,end_time,end_pos,alive\n";
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const Particle& p = pop[i];
        out << i << ',' << p.parent << ',' << format_double(p.birth_time) << ',' << format_double(p.birth_pos) << ','
            << format_double(p.end_time) << ',' << format_double(p.end_pos) << ',' << (p.alive ? 1 : 0) << '\n';
    }
}

namespace {

constexpr char kMagic[8] = {'B', 'B', 'M', 'P', 'O', 'P', '0', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ValidationError("truncated population file");
    return v;
}

template <class T, class F>
void put_column(std::ostream& out, const Population& pop, F field) {
    for (const Particle& p : pop.particles()) put<T>(out, static_cast<T>(field(p)));
}

}  // namespace

void write_population_binary(std::ostream& out, const Population& pop) {
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, 1);  // format version
    put<std::uint8_t>(out, static_cast<std::uint8_t>(pop.mode()));
    put<double>(out, pop.horizon());
    put<double>(out, pop.slack());
    put<std::uint64_t>(out, pop.pruned_count());
    put<std::uint64_t>(out, pop.size());
    put_column<std::int64_t>(out, pop, [](const Particle& p) { return p.parent; });
    put_column<double>(out, pop, [](const Particle& p) { return p.birth_time; });
    put_column<double>(out, pop, [](const Particle& p) { return p.birth_pos; });
    put_column<double>(out, pop, [](const Particle& p) { return p.end_time; });
    put_column<double>(out, pop, [](const Particle& p) { return p.end_pos; });
    put_column<std::uint8_t>(out, pop, [](const Particle& p) { return p.alive ? 1 : 0; });
}

Population read_population_binary(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ValidationError("not a population file");
    if (get<std::uint32_t>(in) != 1) throw ValidationError("unsupported population file version");
    const auto mode = get<std::uint8_t>(in);
    if (mode > 1) throw ValidationError("bad pruning mode in population file");
    const double horizon = get<double>(in);
    const double slack = get<double>(in);
    const auto pruned = get<std::uint64_t>(in);
    const auto n = get<std::uint64_t>(in);
    std::vector<Particle> ps(n);
    for (auto& p : ps) p.parent = get<std::int64_t>(in);
    for (auto& p : ps) p.birth_time = get<double>(in);
    for (auto& p : ps) p.birth_pos = get<double>(in);
    for (auto& p : ps) p.end_time = get<double>(in);
    for (auto& p : ps) p.end_pos = get<double>(in);
    for (auto& p : ps) p.alive = get<std::uint8_t>(in) != 0;
    Population pop(horizon, static_cast<Mode>(mode), slack, pruned, std::move(ps));
    pop.validate();
    return pop;
}

void write_points_csv(std::ostream& out, const PointConfiguration& pc) {
    out << "height,multiplicity\n";
    for (const Atom& a : pc.atoms()) out << format_double(a.height) << ',' << a.multiplicity << '\n';
}

nlohmann::json points_to_json(const PointConfiguration& pc) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const Atom& a : pc.atoms()) atoms.push_back({a.height, a.multiplicity});
    return {{"reference", to_string(pc.reference())}, {"total", pc.total()}, {"atoms", atoms}};
}

PointConfiguration points_from_json(const nlohmann::json& j) {
    const std::string ref = j.at("reference").get<std::string>();
    Reference r;
    if (ref == to_string(Reference::absolute))
        r = Reference::absolute;
    else if (ref == to_string(Reference::centered))
        r = Reference::centered;
    else if (ref == to_string(Reference::relative_to_local_max))
        r = Reference::relative_to_local_max;
    else
        throw ValidationError("unknown point reference '" + ref + "'");
    PointConfiguration pc(r);
    for (const auto& a : j.at("atoms")) pc.add(a.at(0).get<double>(), a.at(1).get<std::uint64_t>());
    pc.validate();
    return pc;
}

void write_labeled_csv(std::ostream& out, const LabeledExtremalProcess& lep) {
    out << "height,multiplicity,cluster_id\n";
    for (std::size_t k = 0; k < lep.entries.size(); ++k)
        for (const Atom& a : lep.entries[k].cluster.atoms())
            out << format_double(a.height) << ',' << a.multiplicity << ',' << k << '\n';
}

nlohmann::json labeled_to_json(const LabeledExtremalProcess& lep) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : lep.entries)
        entries.push_back({{"height", e.height}, {"leaf", e.leaf}, {"cluster", points_to_json(e.cluster)}});
    return {{"radius", lep.radius}, {"entries", entries}};
}

void write_cluster_samples_csv(std::ostream& out, const std::vector<ClusterSample>& samples) {
    out << "sample_id,atom_height,multiplicity\n";
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (const Atom& a : samples[i].config.atoms())
            out << i << ',' << format_double(a.height) << ',' << a.multiplicity << '\n';
}

void write_barrier_csv(std::ostream& out, const std::vector<BarrierEstimate>& rows) {
    out << "x,y,t,decorated,estimate,stderr,n,oracle\n";
    for (const auto& r : rows)
        out << format_double(r.x) << ',' << format_double(r.y) << ',' << format_double(r.t) << ','
            << (r.decorated ? 1 : 0) << ',' << format_double(r.estimate) << ',' << format_double(r.stderr) << ','
            << r.n << ',' << format_double(r.oracle) << '\n';
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << content;
    if (!out) throw ValidationError("failed writing " + path.string());
}

}  // namespace bbm
