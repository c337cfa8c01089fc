"""Server identities and a throwaway PKI for loopback deployments and tests."""

import datetime
import ipaddress
import logging
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID
from pydantic import BaseModel, ConfigDict

__all__ = [
    "TestPki",
    "TlsIdentity",
    "fingerprint_sha256",
    "generate_test_pki",
    "parse_fingerprint",
]

logger = logging.getLogger(__name__)

_VALIDITY = datetime.timedelta(days=30)
_CLOCK_SKEW = datetime.timedelta(hours=1)


class TlsIdentity(BaseModel):
    """A PEM certificate chain (leaf first) and its private key."""

    model_config = ConfigDict(frozen=True)

    cert_pem: bytes
    key_pem: bytes

    @classmethod
    def from_files(cls, cert_file: Path | str, key_file: Path | str) -> "TlsIdentity":
        return cls(
            cert_pem=Path(cert_file).read_bytes(), key_pem=Path(key_file).read_bytes()
        )

    def certificates(self) -> list[x509.Certificate]:
        return x509.load_pem_x509_certificates(self.cert_pem)

    def private_key(self) -> ec.EllipticCurvePrivateKey:
        return serialization.load_pem_private_key(self.key_pem, password=None)

    def fingerprint_sha256(self) -> str:
        """Hex SHA-256 of the leaf certificate, what clients pin."""
        return fingerprint_sha256(self.certificates()[0])


def fingerprint_sha256(certificate: x509.Certificate) -> str:
    return certificate.fingerprint(hashes.SHA256()).hex()


def parse_fingerprint(text: str) -> bytes:
    """Accept hex with or without `:` separators, e.g. as printed by openssl."""
    try:
        digest = bytes.fromhex(text.replace(":", ""))
    except ValueError:
        raise ValueError(f"Fingerprint is not hex: {text!r}") from None
    if len(digest) != 32:
        raise ValueError(f"SHA-256 fingerprint must be 32 bytes, got {len(digest)}")
    return digest


class TestPki(BaseModel):
    """A self-signed CA and one leaf identity it signed."""

    __test__ = False  # not a pytest test class

    model_config = ConfigDict(frozen=True)

    ca_pem: bytes
    identity: TlsIdentity

    def write_ca(self, path: Path | str) -> Path:
        path = Path(path)
        path.write_bytes(self.ca_pem)
        return path


def _name(common_name: str) -> x509.Name:
    return x509.Name(
        [
            x509.NameAttribute(NameOID.ORGANIZATION_NAME, "odoq test"),
            x509.NameAttribute(NameOID.COMMON_NAME, common_name),
        ]
    )


def _san(hostname: str) -> x509.GeneralName:
    try:
        return x509.IPAddress(ipaddress.ip_address(hostname))
    except ValueError:
        return x509.DNSName(hostname)


def generate_test_pki(hostnames: list[str] | tuple[str, ...]) -> TestPki:
    """Create a CA and a leaf certificate valid for every entry of `hostnames`.

    Entries that parse as IP addresses become IP subject alternative names.
    """
    if not hostnames:
        raise ValueError("At least one hostname is required")

    now = datetime.datetime.now(datetime.timezone.utc)
    not_before, not_after = now - _CLOCK_SKEW, now + _VALIDITY

    ca_key = ec.generate_private_key(ec.SECP256R1())
    ca_name = _name("odoq test CA")
    ca_ski = x509.SubjectKeyIdentifier.from_public_key(ca_key.public_key())
    ca_cert = (
        x509.CertificateBuilder()
        .subject_name(ca_name)
        .issuer_name(ca_name)
        .public_key(ca_key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=False,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=True,
                crl_sign=True,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(ca_ski, critical=False)
        .sign(ca_key, hashes.SHA256())
    )

    leaf_key = ec.generate_private_key(ec.SECP256R1())
    leaf_cert = (
        x509.CertificateBuilder()
        .subject_name(_name(hostnames[0]))
        .issuer_name(ca_name)
        .public_key(leaf_key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(
            x509.SubjectAlternativeName([_san(h) for h in hostnames]), critical=False
        )
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=True,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=False,
                crl_sign=False,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(
            x509.ExtendedKeyUsage([ExtendedKeyUsageOID.SERVER_AUTH]), critical=False
        )
        .add_extension(
            x509.AuthorityKeyIdentifier.from_issuer_subject_key_identifier(ca_ski),
            critical=False,
        )
        .sign(ca_key, hashes.SHA256())
    )
    logger.debug(f"Generated test PKI for {', '.join(hostnames)}")

    pem = serialization.Encoding.PEM
    return TestPki(
        ca_pem=ca_cert.public_bytes(pem),
        identity=TlsIdentity(
            cert_pem=leaf_cert.public_bytes(pem),
            key_pem=leaf_key.private_bytes(
                pem,
                serialization.PrivateFormat.PKCS8,
                serialization.NoEncryption(),
            ),
        ),
    )
