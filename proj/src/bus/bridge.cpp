#include <avatar/bus/bridge.hpp>

namespace avatar::bus {

Bridge::Bridge(Bus& bus, Socket socket)
    : m_bus(&bus)
    , m_link(std::make_shared<Link>())
{
    m_link->sock = std::move(socket);
    m_reader = std::thread([this] { read_loop(); });
}

Bridge::~Bridge() { close(); }

void Bridge::close()
{
    m_stop = true;
    if (m_reader.joinable())
        m_reader.join();
    std::scoped_lock lock(m_link->send_mutex);
    m_link->connected = false;
    m_link->sock.close();
}

void Bridge::export_port(std::string_view output, Carrier carrier)
{
    const std::string tap = "/bridge" + std::string(output);
    const auto src = m_bus->lookup(output);
    if (!src)
        throw BusError(BusErrc::UnknownPort, std::string(output));
    const PortHandle in = m_bus->register_port(tap, Direction::Input, src->subnet);
    m_bus->subscribe(in, [link = m_link](const Envelope& e) {
        const Bytes frame = encode(e);
        std::scoped_lock lock(link->send_mutex);
        if (!link->connected)
            return;
        try
        {
            link->sock.send_all(frame);
            ++link->out;
        }
        catch (const BusError&)
        {
            link->connected = false;
        }
    });
    m_bus->connect(output, tap, carrier);
}

PortHandle Bridge::import_port(std::string_view name, std::string_view subnet)
{
    const PortHandle h = m_bus->register_port(name, Direction::Output, subnet);
    std::scoped_lock lock(m_map_mutex);
    m_imports.emplace(h.name, h);
    return h;
}

void Bridge::read_loop()
{
    Bytes buffer;
    std::uint8_t chunk[65536];
    while (!m_stop && m_link->connected)
    {
        std::optional<std::size_t> n;
        try
        {
            n = m_link->sock.recv_some(chunk, milliseconds(50));
        }
        catch (const BusError&)
        {
            break;
        }
        if (!n)
            continue;
        if (*n == 0)
            break;
        buffer.insert(buffer.end(), chunk, chunk + *n);
        try
        {
            for (;;)
            {
                const auto size = frame_size(buffer);
                if (!size || buffer.size() < *size)
                    break;
                Envelope e = decode({buffer.data(), *size});
                buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(*size));
                ++m_in;
                std::optional<PortHandle> out;
                {
                    std::scoped_lock lock(m_map_mutex);
                    if (const auto it = m_imports.find(e.topic); it != m_imports.end())
                        out = it->second;
                }
                if (out)
                    m_bus->publish(*out, e.type_tag, std::move(e.payload));
            }
        }
        catch (const BusError&)
        {
            // Corrupt stream: nothing after this point can be framed.
            break;
        }
    }
    m_link->connected = false;
}

std::unique_ptr<Bridge> bridge_accept(Bus& bus, Listener& listener, milliseconds timeout)
{
    auto s = listener.accept(timeout);
    if (!s)
        return nullptr;
    return std::make_unique<Bridge>(bus, std::move(*s));
}

std::unique_ptr<Bridge> bridge_connect(Bus& bus, const std::string& host, std::uint16_t port)
{
    return std::make_unique<Bridge>(bus, tcp_connect(host, port));
}

} // namespace avatar::bus
