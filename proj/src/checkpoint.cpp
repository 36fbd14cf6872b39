#include "adprog/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adprog/errors.hpp"

namespace adprog::num {

namespace {

void put_f32_le(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                 static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    os.write(b, 4);
}

float get_f32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ContractError("checkpoint: truncated payload");
    std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                         (static_cast<std::uint32_t>(b[1]) << 8) |
                         (static_cast<std::uint32_t>(b[2]) << 16) |
                         (static_cast<std::uint32_t>(b[3]) << 24);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

std::string read_line(std::istream& is, const char* what) {
    std::string line;
    if (!std::getline(is, line)) throw ContractError(std::string("checkpoint: missing ") + what);
    return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json) {
    if (config_json.find('\n') != std::string::npos)
        throw ContractError("checkpoint: config must be a single line");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("checkpoint: cannot open for writing: " + path);
    os << "ADPROG_CKPT v1\n";
    os << "config " << config_json << "\n";
    os << "tensors " << store.names().size() << "\n";
    std::int64_t total = 0;
    for (const auto& name : store.names()) {
        const Tensor& t = store.at(name);
        os << name << " " << t.rank();
        for (std::int64_t d : t.shape()) os << " " << d;
        os << " " << total << "\n";
        total += t.numel();
    }
    os << "payload " << total << "\n";
    for (const auto& name : store.names()) {
        const Tensor& t = store.at(name);
        for (std::int64_t i = 0; i < t.numel(); ++i)
            put_f32_le(os, static_cast<float>(t[i]));
    }
    if (!os) throw ContractError("checkpoint: write failed: " + path);
}

ParamStore load_checkpoint(const std::string& path, std::string* config_json_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("checkpoint: cannot open: " + path);
    if (read_line(is, "magic") != "ADPROG_CKPT v1")
        throw ContractError("checkpoint: bad magic line in " + path);
    std::string config_line = read_line(is, "config line");
    if (config_line.rfind("config ", 0) != 0)
        throw ContractError("checkpoint: missing config line");
    if (config_json_out) *config_json_out = config_line.substr(7);

    std::istringstream count_line(read_line(is, "tensor count"));
    std::string word;
    std::size_t count = 0;
    if (!(count_line >> word >> count) || word != "tensors")
        throw ContractError("checkpoint: malformed tensor count line");

    ParamStore store;
    std::vector<std::string> names;
    std::vector<std::vector<std::int64_t>> shapes;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < count; ++i) {
        std::istringstream entry(read_line(is, "tensor entry"));
        std::string name;
        int rank = 0;
        if (!(entry >> name >> rank) || rank < 1)
            throw ContractError("checkpoint: malformed tensor entry");
        std::vector<std::int64_t> shape(static_cast<std::size_t>(rank));
        for (auto& d : shape)
            if (!(entry >> d)) throw ContractError("checkpoint: malformed tensor shape");
        std::int64_t offset = -1;
        if (!(entry >> offset) || offset != total)
            throw ContractError("checkpoint: tensor offset does not match directory order");
        total += shape_numel(shape);
        names.push_back(std::move(name));
        shapes.push_back(std::move(shape));
    }

    std::istringstream payload_line(read_line(is, "payload header"));
    std::int64_t declared = -1;
    if (!(payload_line >> word >> declared) || word != "payload" || declared != total)
        throw ContractError("checkpoint: payload header does not match manifest");

    for (std::size_t i = 0; i < count; ++i) {
        Tensor t(shapes[i]);
        for (std::int64_t j = 0; j < t.numel(); ++j)
            t[j] = static_cast<double>(get_f32_le(is));
        store.add(names[i], std::move(t));
    }
    // Anything after the payload means the file was not produced by save().
    char extra;
    if (is.read(&extra, 1)) throw ContractError("checkpoint: trailing bytes after payload");
    return store;
}

}  // namespace adprog::num
